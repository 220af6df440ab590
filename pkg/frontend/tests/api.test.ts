import { describe, expect, it } from "vitest";

import { ApiError, ControlApi } from "../src/api.js";

function fakeFetch(routes: Record<string, { status?: number; body: unknown }>) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const impl = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const key = `${init?.method ?? "GET"} ${url}`;
    const route = routes[key];
    if (!route) throw new Error(`no route for ${key}`);
    return new Response(JSON.stringify(route.body), { status: route.status ?? 200 });
  };
  return { impl, calls };
}

describe("ControlApi", () => {
  it("fetches site views", async () => {
    const { impl } = fakeFetch({
      "GET http://ctl/ctl/v1/sites/pub.test": {
        body: { site: "pub.test", third_parties: [] },
      },
    });
    const api = new ControlApi("http://ctl", impl);
    const view = await api.siteView("pub.test");
    expect(view.site).toBe("pub.test");
  });

  it("posts activation with the pair body", async () => {
    const { impl, calls } = fakeFetch({
      "POST http://ctl/ctl/v1/activate": {
        body: { activated: true, released: 1, reloaded: [] },
      },
    });
    const api = new ControlApi("http://ctl", impl);
    const result = await api.activate("pub.test", "osn.test");
    expect(result.released).toBe(1);
    expect(JSON.parse(calls[0].init?.body as string)).toEqual({
      site: "pub.test",
      thirdParty: "osn.test",
    });
  });

  it("surfaces server errors with status and message", async () => {
    const { impl } = fakeFetch({
      "POST http://ctl/ctl/v1/activate": {
        status: 422,
        body: { error: "third party must differ from site" },
      },
    });
    const api = new ControlApi("http://ctl", impl);
    const err = await api.activate("pub.test", "pub.test").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(422);
    expect(err.message).toMatch(/differ/);
  });

  it("strips trailing slashes from the base URL", async () => {
    const { impl, calls } = fakeFetch({
      "GET http://ctl/ctl/v1/health": { body: { status: "ok", policy: "interaction" } },
    });
    await new ControlApi("http://ctl///", impl).health();
    expect(calls[0].url).toBe("http://ctl/ctl/v1/health");
  });
});
