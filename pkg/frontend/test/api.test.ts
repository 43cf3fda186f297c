import { describe, expect, it } from "vitest";

import { Transport, submitInfer } from "../src/api.js";
import { App } from "../src/app.js";
import { placeDot } from "../src/prompt-state.js";
import { InferRequest, SchemaError } from "../src/schema.js";

const SIZE = { width: 64, height: 64 };

function request(): InferRequest {
  return {
    image: "aW1n",
    prompt: { kind: "dot", points: [[10, 10]] },
    options: { return_mask: true, return_overlay: true },
  };
}

function okTransport(body: unknown): Transport {
  return async () => ({ ok: true, status: 200, json: async () => body });
}

function errorTransport(status: number, detail: string): Transport {
  return async () => ({ ok: false, status, json: async () => ({ detail }) });
}

describe("submitInfer", () => {
  it("returns the parsed response on 200", async () => {
    const body = { removal: "cmVt", mask: "bWFzaw==", overlay: "b3Zs", timing_ms: 12.5 };
    const resp = await submitInfer(okTransport(body), "", request(), SIZE);
    expect(resp.removal).toBe("cmVt");
    expect(resp.timing_ms).toBe(12.5);
  });

  it("surfaces the server detail message on 4xx and is not retryable", async () => {
    const t = errorTransport(400, "dot coordinate (-1, 5) out of bounds for 64x64");
    await expect(submitInfer(t, "", request(), SIZE)).rejects.toMatchObject({
      status: 400,
      retryable: false,
      message: expect.stringContaining("(-1, 5)"),
    });
  });

  it("flags 5xx as retryable", async () => {
    const t = errorTransport(500, "non-finite network output");
    await expect(submitInfer(t, "", request(), SIZE)).rejects.toMatchObject({
      status: 500,
      retryable: true,
    });
  });

  it("flags network failures as retryable", async () => {
    const t: Transport = async () => {
      throw new Error("connection refused");
    };
    await expect(submitInfer(t, "", request(), SIZE)).rejects.toMatchObject({
      status: null,
      retryable: true,
    });
  });

  it("rejects schema-invalid requests before any transport call", async () => {
    let called = false;
    const t: Transport = async () => {
      called = true;
      return { ok: true, status: 200, json: async () => ({}) };
    };
    const bad = request();
    bad.prompt = { kind: "dot", points: [[99, 5]] }; // out of bounds for 64x64
    await expect(submitInfer(t, "", bad, SIZE)).rejects.toThrow(SchemaError);
    expect(called).toBe(false);
  });
});

describe("app-level submit", () => {
  function makeApp(transport: Transport): App {
    const app = new App({
      baseUrl: "",
      transport,
      encodeMask: () => "bWFzaw==",
    });
    app.loadImage("aW1n", SIZE.width, SIZE.height);
    app.state = placeDot(app.state, 10, 10, SIZE.width, SIZE.height);
    return app;
  }

  it("renders both result layers on 200", async () => {
    const body = { removal: "cmVt", mask: "bWFzaw==", overlay: "b3Zs", timing_ms: 3.0 };
    const app = makeApp(okTransport(body));
    await app.submit();
    expect(app.result).not.toBeNull();
    expect(app.result!.removal).toBe("cmVt");
    expect(app.result!.overlay).toBe("b3Zs");
    expect(app.notices.list()).toHaveLength(0);
    // overlay toggles without discarding the removal layer
    app.toggleOverlay();
    expect(app.overlayVisible).toBe(false);
    expect(app.result!.removal).toBe("cmVt");
  });

  it("shows a dismissible notice on 400 and preserves the prompt state", async () => {
    const app = makeApp(errorTransport(400, "mask shape (32, 32) does not match image 64x64"));
    const before = app.state;
    await app.submit();
    expect(app.result).toBeNull();
    const notices = app.notices.list();
    expect(notices).toHaveLength(1);
    expect(notices[0].message).toContain("mask shape");
    expect(notices[0].retryable).toBe(false);
    expect(app.state).toBe(before);
    app.notices.dismiss(notices[0].id);
    expect(app.notices.list()).toHaveLength(0);
  });

  it("offers retry on 5xx", async () => {
    const app = makeApp(errorTransport(503, "model not loaded"));
    await app.submit();
    const notices = app.notices.list();
    expect(notices).toHaveLength(1);
    expect(notices[0].retryable).toBe(true);
  });

  it("blocks concurrent submits while one is in flight", async () => {
    let calls = 0;
    const t: Transport = async () => {
      calls++;
      await new Promise((r) => setTimeout(r, 10));
      return {
        ok: true,
        status: 200,
        json: async () => ({ removal: "cmVt", timing_ms: 1 }),
      };
    };
    const app = makeApp(t);
    const first = app.submit();
    await app.submit(); // ignored: one request in flight
    await first;
    expect(calls).toBe(1);
  });
});
