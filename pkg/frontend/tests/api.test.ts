import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";

function recordingClient(body: unknown, status = 200) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const api = new ApiClient("http://host", async (url, init) => {
    calls.push({ url, init });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  });
  return { api, calls };
}

describe("request construction", () => {
  it("builds the samples query from filters and paging", async () => {
    const { api, calls } = recordingClient({ items: [], total: 0, page: 2, page_size: 10 });
    await api.samples({ outcome: "mixed", classIndex: 4 }, 2, 10);
    const url = new URL(calls[0]!.url);
    expect(url.pathname).toBe("/api/samples");
    expect(url.searchParams.get("outcome")).toBe("mixed");
    expect(url.searchParams.get("class")).toBe("4");
    expect(url.searchParams.get("page")).toBe("2");
    expect(url.searchParams.get("page_size")).toBe("10");
  });

  it("omits unset filters entirely", async () => {
    const { api, calls } = recordingClient({ items: [], total: 0, page: 0, page_size: 24 });
    await api.samples();
    const url = new URL(calls[0]!.url);
    expect(url.searchParams.has("outcome")).toBe(false);
    expect(url.searchParams.has("class")).toBe(false);
  });

  it("posts explanation requests as JSON, leaving class_index out when unset", async () => {
    const { api, calls } = recordingClient({});
    await api.requestExplanation("s9");
    expect(calls[0]!.init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0]!.init?.body))).toEqual({ sample_id: "s9" });
    await api.requestExplanation("s9", 3);
    expect(JSON.parse(String(calls[1]!.init?.body))).toEqual({
      sample_id: "s9",
      class_index: 3,
    });
  });

  it("prefixes asset urls with the base", () => {
    const { api } = recordingClient({});
    expect(api.assetUrl("/assets/abc.png")).toBe("http://host/assets/abc.png");
  });
});

describe("error handling", () => {
  it("surfaces the server's detail message on failure", async () => {
    const { api } = recordingClient({ detail: "unknown sample: ghost" }, 404);
    await expect(api.requestExplanation("ghost")).rejects.toThrow(
      /HTTP 404: unknown sample: ghost/,
    );
  });

  it("keeps the status code on the error object", async () => {
    const { api } = recordingClient({ detail: "model not loaded" }, 503);
    const err = await api.classes().catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(503);
  });

  it("tolerates non-JSON error bodies", async () => {
    const api = new ApiClient(
      "",
      async () => new Response("<html>gateway timeout</html>", { status: 504, statusText: "Gateway Timeout" }),
    );
    await expect(api.classes()).rejects.toThrow(/HTTP 504/);
  });
});
