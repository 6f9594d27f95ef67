import { existsSync, readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

/** The built bundle must be servable as plain ES modules: every
 * relative import resolves to a shipped file and the only bare
 * specifier is "zod", which the import map vendors. */

const dist = new URL("../dist", import.meta.url).pathname;

describe.skipIf(!existsSync(dist))("dist integrity", () => {
  const moduleFiles = readdirSync(dist).filter((f) => f.endsWith(".js"));

  it("ships the entry module and the page", () => {
    expect(moduleFiles).toContain("main.js");
    expect(existsSync(join(dist, "index.html"))).toBe(true);
    expect(existsSync(join(dist, "styles.css"))).toBe(true);
  });

  it("resolves every import", () => {
    const bare = new Set<string>();
    for (const file of moduleFiles) {
      const source = readFileSync(join(dist, file), "utf-8");
      for (const match of source.matchAll(/from\s+"([^"]+)"/g)) {
        const target = match[1]!;
        if (target.startsWith("./") || target.startsWith("../")) {
          expect(existsSync(join(dist, target)), `${file} imports ${target}`).toBe(true);
        } else {
          bare.add(target);
        }
      }
    }
    expect([...bare]).toEqual(["zod"]);
  });

  it("maps zod onto the vendored copy", () => {
    const page = readFileSync(join(dist, "index.html"), "utf-8");
    expect(page).toContain('"zod": "./vendor/zod/index.js"');
    expect(existsSync(join(dist, "vendor/zod/index.js"))).toBe(true);
    expect(existsSync(join(dist, "vendor/zod/v4/classic/external.js"))).toBe(true);
  });
});
