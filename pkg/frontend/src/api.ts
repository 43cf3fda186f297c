/**
 * Client for the inference service. Transport is injected so tests can mock
 * it; server errors surface with their detail message, network failures are
 * flagged retryable.
 */

import { InferRequest, InferResponse, validateRequest } from "./schema.js";

export type Transport = (
  url: string,
  init: { method: string; headers: Record<string, string>; body: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number | null,
    readonly retryable: boolean,
  ) {
    super(message);
  }
}

export async function submitInfer(
  transport: Transport,
  baseUrl: string,
  request: InferRequest,
  imageSize: { width: number; height: number },
): Promise<InferResponse> {
  validateRequest(request, imageSize.width, imageSize.height);
  let resp;
  try {
    resp = await transport(`${baseUrl}/infer`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
  } catch (err) {
    throw new ApiError(`network failure: ${String(err)}`, null, true);
  }
  if (!resp.ok) {
    let detail = `HTTP ${resp.status}`;
    try {
      const body = (await resp.json()) as { detail?: unknown };
      if (body && body.detail) detail = String(body.detail);
    } catch {
      // keep the bare status line
    }
    throw new ApiError(detail, resp.status, resp.status >= 500);
  }
  const body = (await resp.json()) as InferResponse;
  if (typeof body.removal !== "string" || typeof body.timing_ms !== "number") {
    throw new ApiError("malformed response from service", null, false);
  }
  return body;
}

export async function checkHealth(
  transport: Transport,
  baseUrl: string,
): Promise<{ ok: boolean; checkpointId?: string }> {
  try {
    const resp = await transport(`${baseUrl}/healthz`, {
      method: "GET",
      headers: {},
      body: "",
    });
    if (!resp.ok) return { ok: false };
    const body = (await resp.json()) as { checkpoint_id?: string };
    return { ok: true, checkpointId: body.checkpoint_id };
  } catch {
    return { ok: false };
  }
}
