import pytest
from fastapi.testclient import TestClient

from physbus.gateway import create_app


@pytest.fixture()
def client():
    with TestClient(create_app()) as c:
        yield c


def make_session(client, ratio=200.0, config=None) -> str:
    body = {"ratio": ratio}
    if config:
        body["config"] = config
    response = client.post("/session", json=body)
    assert response.status_code == 200
    return response.json()["session_id"]


def collect_until(ws, predicate, limit=500):
    """Read events until one satisfies the predicate; returns all read."""
    events = []
    for _ in range(limit):
        event = ws.receive_json()
        events.append(event)
        if predicate(event):
            return events
    raise AssertionError(f"no matching event in {limit} reads; last: {events[-5:]}")


class TestSessions:
    def test_create_session(self, client):
        sid = make_session(client)
        assert sid.startswith("s")

    def test_create_echoes_resolved_config(self, client):
        response = client.post("/session", json={"config": {"n_slots": 4, "rows": 2, "cols": 2}})
        body = response.json()
        assert body["config"]["n_slots"] == 4
        assert body["config"]["rows"] == 2
        assert body["config"]["heartbeat"]["interval_ms"] == 500
        assert body["ratio"] == 1.0

    def test_sessions_are_independent(self, client):
        assert make_session(client) != make_session(client)

    def test_invalid_config_rejected_with_reason(self, client):
        response = client.post("/session", json={"config": {"n_slots": 0}})
        assert response.status_code == 400
        assert "n_slots" in response.json()["detail"]

    def test_unknown_config_key_rejected(self, client):
        response = client.post("/session", json={"config": {"slotcount": 6}})
        assert response.status_code == 400

    def test_bad_ratio_rejected(self, client):
        response = client.post("/session", json={"ratio": 0})
        assert response.status_code == 400

    def test_first_event_is_empty_registry_snapshot(self, client):
        sid = make_session(client)
        with client.websocket_connect(f"/session/{sid}/events") as ws:
            first = ws.receive_json()
        assert first["seq"] == 1
        assert first["type"] == "registry_changed"
        assert first["registry"] == []


class TestCommands:
    def test_plug_flows_to_registry(self, client):
        sid = make_session(client)
        response = client.post(f"/session/{sid}/command", json={"action": "plug", "slot": 2, "descriptor": "vibration"})
        assert response.json() == {"status": "accepted"}
        with client.websocket_connect(f"/session/{sid}/events") as ws:
            events = collect_until(
                ws,
                lambda e: e["type"] == "registry_changed"
                and any(entry["address"] == 2 for entry in e["registry"]),
            )
        announce_seen = [e for e in events if e["type"] == "frame_seen" and "6e" in e["frame"]]
        assert announce_seen, "announce frame should appear in the stream"
        entry = events[-1]["registry"][0]
        assert entry["variables"] == [{"index": 0, "min": 0, "max": 255, "granularity": 16}]

    def test_occupied_slot_rejected(self, client):
        sid = make_session(client)
        client.post(f"/session/{sid}/command", json={"action": "plug", "slot": 1, "descriptor": "fan"})
        response = client.post(f"/session/{sid}/command", json={"action": "plug", "slot": 1, "descriptor": "fan"})
        assert response.json() == {"status": "rejected", "reason": "SlotOccupied"}
        with client.websocket_connect(f"/session/{sid}/events") as ws:
            events = collect_until(ws, lambda e: e["type"] == "command_rejected")
        assert events[-1]["reason"] == "SlotOccupied"
        assert events[-1]["action"] == "plug"

    def test_unplug_empty_rejected(self, client):
        sid = make_session(client)
        response = client.post(f"/session/{sid}/command", json={"action": "unplug", "slot": 3})
        assert response.json() == {"status": "rejected", "reason": "SlotEmpty"}

    def test_out_of_range_set_rejected(self, client):
        sid = make_session(client)
        client.post(f"/session/{sid}/command", json={"action": "plug", "slot": 1, "descriptor": "fan"})
        with client.websocket_connect(f"/session/{sid}/events") as ws:
            collect_until(
                ws,
                lambda e: e["type"] == "registry_changed" and e["registry"],
            )
        response = client.post(
            f"/session/{sid}/command",
            json={"action": "set", "address": 1, "var_index": 0, "value": 300},
        )
        assert response.json() == {"status": "rejected", "reason": "ValueOutOfRange"}

    def test_valid_set_changes_level(self, client):
        sid = make_session(client)
        client.post(f"/session/{sid}/command", json={"action": "plug", "slot": 1, "descriptor": "fan"})
        with client.websocket_connect(f"/session/{sid}/events") as ws:
            collect_until(ws, lambda e: e["type"] == "registry_changed" and e["registry"])
            response = client.post(
                f"/session/{sid}/command",
                json={"action": "set", "address": 1, "var_index": 0, "value": 128},
            )
            assert response.json() == {"status": "accepted"}
            events = collect_until(ws, lambda e: e["type"] == "level_changed" and e["level"] > 0)
        assert events[-1] == {
            "seq": events[-1]["seq"],
            "time": events[-1]["time"],
            "type": "level_changed",
            "address": 1,
            "var_index": 0,
            "level": 146,
        }

    def test_unknown_action(self, client):
        sid = make_session(client)
        response = client.post(f"/session/{sid}/command", json={"action": "frobnicate"})
        assert response.json()["status"] == "rejected"
        assert "UnknownAction" in response.json()["reason"]

    def test_unknown_descriptor(self, client):
        sid = make_session(client)
        response = client.post(f"/session/{sid}/command", json={"action": "plug", "slot": 1, "descriptor": "toaster"})
        assert "UnknownDescriptor" in response.json()["reason"]

    def test_unknown_session(self, client):
        response = client.post("/session/zz/command", json={"action": "unplug", "slot": 1})
        assert response.status_code == 404
        assert response.json()["detail"] == "UnknownSession"

    def test_csv_map_replay_flow(self, client):
        sid = make_session(client)
        client.post(f"/session/{sid}/command", json={"action": "plug", "slot": 1, "descriptor": "fan"})
        with client.websocket_connect(f"/session/{sid}/events") as ws:
            collect_until(ws, lambda e: e["type"] == "registry_changed" and e["registry"])
            assert client.post(
                f"/session/{sid}/command",
                json={"action": "load_csv", "csv": "v\n0\n5\n10\n"},
            ).json() == {"status": "accepted"}
            assert client.post(
                f"/session/{sid}/command",
                json={"action": "map", "column": "v", "address": 1, "var_index": 0},
            ).json() == {"status": "accepted"}
            assert client.post(
                f"/session/{sid}/command", json={"action": "replay", "cadence_ms": 100}
            ).json() == {"status": "accepted"}
            events = collect_until(ws, lambda e: e["type"] == "level_changed" and e["level"] == 255)
        levels = [e["level"] for e in events if e["type"] == "level_changed" and e["level"] > 0]
        assert levels == sorted(levels)

    def test_map_without_dataset(self, client):
        sid = make_session(client)
        response = client.post(
            f"/session/{sid}/command", json={"action": "map", "column": "v", "address": 1, "var_index": 0}
        )
        assert response.json() == {"status": "rejected", "reason": "NoDataset"}


class TestEventStream:
    def test_seq_strictly_increasing(self, client):
        sid = make_session(client)
        client.post(f"/session/{sid}/command", json={"action": "plug", "slot": 1, "descriptor": "fan"})
        with client.websocket_connect(f"/session/{sid}/events") as ws:
            events = collect_until(ws, lambda e: e["seq"] >= 10)
        seqs = [e["seq"] for e in events]
        assert seqs == sorted(set(seqs))

    def test_reconnect_without_gaps(self, client):
        sid = make_session(client)
        client.post(f"/session/{sid}/command", json={"action": "plug", "slot": 1, "descriptor": "fan"})
        with client.websocket_connect(f"/session/{sid}/events") as ws:
            first_half = collect_until(ws, lambda e: e["seq"] >= 5)
        last_seen = first_half[-1]["seq"]
        with client.websocket_connect(f"/session/{sid}/events?from_seq={last_seen + 1}") as ws:
            second_half = collect_until(ws, lambda e: e["seq"] >= last_seen + 5)
        seqs = [e["seq"] for e in first_half + second_half]
        assert seqs == list(range(1, seqs[-1] + 1))  # gap-free by construction

    def test_replay_from_seq_one(self, client):
        sid = make_session(client)
        client.post(f"/session/{sid}/command", json={"action": "plug", "slot": 1, "descriptor": "fan"})
        with client.websocket_connect(f"/session/{sid}/events") as ws:
            collect_until(ws, lambda e: e["seq"] >= 4)
        with client.websocket_connect(f"/session/{sid}/events?from_seq=1") as ws:
            replayed = collect_until(ws, lambda e: e["seq"] >= 4)
        assert replayed[0]["seq"] == 1

    def test_unknown_session_stream(self, client):
        with client.websocket_connect("/session/nope/events") as ws:
            assert ws.receive_json() == {"error": "UnknownSession"}


class TestDescriptors:
    def test_palette(self, client):
        response = client.get("/descriptors")
        assert response.status_code == 200
        palette = {d["name"]: d for d in response.json()}
        assert set(palette) == {"fan", "vibration"}
        assert palette["fan"]["variables"][0]["name"] == "airflow"
        assert palette["vibration"]["module_name"] == "vibration-motor"
