#!/usr/bin/env python3
"""Record a real gateway session as a frontend test fixture.

Drives one session through the actual HTTP/WS wire: plug, a rejected
duplicate plug, a rejected out-of-range set (the direct-API case the
slider bounds normally prevent), a valid set, unplug, disconnect
detection. Asserts the plug-to-registry round trip stays within one
heartbeat interval of virtual time, then freezes the event log (plus
seq markers) into test/fixtures/session-log.json.

Run from the frontend directory: python3 scripts/record_fixture.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from physbus.gateway import create_app

OUT = Path(__file__).resolve().parent.parent / "test" / "fixtures" / "session-log.json"
HEARTBEAT_INTERVAL_MS = 500


def main() -> None:
    events = []
    markers = {}
    with TestClient(create_app()) as client:
        session = client.post("/session", json={"ratio": 50.0}).json()
        sid = session["session_id"]

        def send(cmd):
            return client.post(f"/session/{sid}/command", json=cmd).json()

        with client.websocket_connect(f"/session/{sid}/events") as ws:
            def pump_until(predicate, limit=500):
                for _ in range(limit):
                    event = ws.receive_json()
                    events.append(event)
                    if predicate(event):
                        return event
                raise AssertionError("fixture condition never satisfied")

            pump_until(lambda e: e["seq"] == 1)
            markers["before_plug_seq"] = events[-1]["seq"]
            assert send({"action": "plug", "slot": 2, "descriptor": "vibration"})["status"] == "accepted"
            registered = pump_until(
                lambda e: e["type"] == "registry_changed"
                and any(entry["address"] == 2 for entry in e["registry"])
            )
            before = next(e for e in events if e["seq"] == markers["before_plug_seq"])
            latency = registered["time"] - before["time"]
            assert latency <= HEARTBEAT_INTERVAL_MS, f"round trip took {latency} virtual ms"
            markers["plug_registered_seq"] = registered["seq"]

            assert send({"action": "plug", "slot": 2, "descriptor": "fan"})["status"] == "rejected"
            rejected = pump_until(lambda e: e["type"] == "command_rejected")
            assert rejected["reason"] == "SlotOccupied"
            markers["occupied_rejection_seq"] = rejected["seq"]

            result = send({"action": "set", "address": 2, "var_index": 0, "value": 999})
            assert result == {"status": "rejected", "reason": "ValueOutOfRange"}
            rejected = pump_until(
                lambda e: e["type"] == "command_rejected" and e["reason"] == "ValueOutOfRange"
            )
            markers["out_of_range_rejection_seq"] = rejected["seq"]

            assert send({"action": "set", "address": 2, "var_index": 0, "value": 128})["status"] == "accepted"
            changed = pump_until(lambda e: e["type"] == "level_changed" and e["level"] > 0)
            markers["level_changed_seq"] = changed["seq"]

            assert send({"action": "unplug", "slot": 2})["status"] == "accepted"
            detected = pump_until(lambda e: e["type"] == "disconnect_detected")
            markers["disconnect_seq"] = detected["seq"]
            pump_until(lambda e: e["type"] == "registry_changed" and e["registry"] == [])

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(
        json.dumps(
            {"heartbeat_interval_ms": HEARTBEAT_INTERVAL_MS, "markers": markers, "events": events},
            indent=1,
        )
    )
    print(f"wrote {len(events)} events to {OUT}")


if __name__ == "__main__":
    main()
