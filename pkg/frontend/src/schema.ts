/**
 * Wire contract of the inference service (POST /infer).
 *
 * Mirrors the server's request/response models; validatePrompt enforces the
 * same constraints the server applies so malformed prompts are caught before
 * a request leaves the browser.
 */

export type PromptKind = "dot" | "line" | "subject_mask";

export interface WirePrompt {
  kind: PromptKind;
  points?: [number, number][];
  mask?: string; // base64 PNG, subject_mask only
}

export interface InferRequest {
  image: string; // base64 PNG
  prompt: WirePrompt;
  options: { return_mask: boolean; return_overlay: boolean };
}

export interface InferResponse {
  removal: string;
  mask?: string;
  overlay?: string;
  timing_ms: number;
}

export class SchemaError extends Error {}

export function validatePrompt(
  prompt: WirePrompt,
  width: number,
  height: number,
): void {
  if (!["dot", "line", "subject_mask"].includes(prompt.kind)) {
    throw new SchemaError(`unknown prompt kind ${String(prompt.kind)}`);
  }
  if (prompt.kind === "subject_mask") {
    if (!prompt.mask || prompt.mask.length === 0) {
      throw new SchemaError("subject_mask prompt needs a mask image");
    }
    if (prompt.points !== undefined) {
      throw new SchemaError("subject_mask prompt must not carry points");
    }
    return;
  }
  const points = prompt.points;
  if (!points || points.length === 0) {
    throw new SchemaError(`${prompt.kind} prompt needs points`);
  }
  if (prompt.kind === "dot" && points.length !== 1) {
    throw new SchemaError("dot prompt needs exactly one point");
  }
  if (prompt.kind === "line" && points.length < 2) {
    throw new SchemaError("line prompt needs at least two vertices");
  }
  for (const [x, y] of points) {
    if (!Number.isFinite(x) || !Number.isFinite(y)) {
      throw new SchemaError(`non-finite coordinate (${x}, ${y})`);
    }
    if (x < 0 || x >= width || y < 0 || y >= height) {
      throw new SchemaError(
        `coordinate (${x}, ${y}) out of bounds for ${width}x${height}`,
      );
    }
  }
}

export function validateRequest(req: InferRequest, width: number, height: number): void {
  if (!req.image) {
    throw new SchemaError("request needs an image");
  }
  validatePrompt(req.prompt, width, height);
  if (
    typeof req.options?.return_mask !== "boolean" ||
    typeof req.options?.return_overlay !== "boolean"
  ) {
    throw new SchemaError("options need boolean return_mask/return_overlay");
  }
}
