/**
 * Prompt editing state: one prompt at a time, built from tool events.
 *
 * The state is immutable; every mutation returns a fresh object so the
 * history stack can keep exact snapshots. The brush mask lives at image
 * resolution regardless of canvas zoom.
 */

import { SchemaError, WirePrompt, validatePrompt } from "./schema.js";

export type Tool = "dot" | "line" | "brush" | "eraser";

export interface MaskBuffer {
  width: number;
  height: number;
  data: Uint8Array; // 0/1 per pixel, row-major
}

export interface PromptState {
  tool: Tool;
  dot: [number, number] | null;
  line: [number, number][];
  lineClosed: boolean;
  mask: MaskBuffer | null;
}

export function emptyState(tool: Tool = "dot"): PromptState {
  return { tool, dot: null, line: [], lineClosed: false, mask: null };
}

function cloneMask(mask: MaskBuffer): MaskBuffer {
  return { width: mask.width, height: mask.height, data: new Uint8Array(mask.data) };
}

export function cloneState(state: PromptState): PromptState {
  return {
    tool: state.tool,
    dot: state.dot ? [state.dot[0], state.dot[1]] : null,
    line: state.line.map(([x, y]) => [x, y] as [number, number]),
    lineClosed: state.lineClosed,
    mask: state.mask ? cloneMask(state.mask) : null,
  };
}

export function statesEqual(a: PromptState, b: PromptState): boolean {
  if (a.tool !== b.tool || a.lineClosed !== b.lineClosed) return false;
  if (JSON.stringify(a.dot) !== JSON.stringify(b.dot)) return false;
  if (JSON.stringify(a.line) !== JSON.stringify(b.line)) return false;
  if ((a.mask === null) !== (b.mask === null)) return false;
  if (a.mask && b.mask) {
    if (a.mask.width !== b.mask.width || a.mask.height !== b.mask.height) return false;
    for (let i = 0; i < a.mask.data.length; i++) {
      if (a.mask.data[i] !== b.mask.data[i]) return false;
    }
  }
  return true;
}

/** Switching tools clears the previous prompt (single-prompt interaction). */
export function switchTool(state: PromptState, tool: Tool): PromptState {
  if (tool === state.tool) return state;
  if (tool === "eraser" && (state.tool === "brush" || state.mask)) {
    // eraser works on the existing brush mask
    return { ...cloneState(state), tool };
  }
  const next = emptyState(tool);
  if (tool === "eraser") next.mask = state.mask ? cloneMask(state.mask) : null;
  return next;
}

function inBounds(x: number, y: number, width: number, height: number): boolean {
  return x >= 0 && x < width && y >= 0 && y < height;
}

/** Dot tool: one click sets the point, replacing any prior one. */
export function placeDot(
  state: PromptState,
  x: number,
  y: number,
  width: number,
  height: number,
): PromptState {
  if (!inBounds(x, y, width, height)) return state; // outside clicks ignored
  return { ...emptyState("dot"), dot: [x, y] };
}

/** Line tool: clicks append vertices; double-click closes the polyline. */
export function addLineVertex(
  state: PromptState,
  x: number,
  y: number,
  width: number,
  height: number,
): PromptState {
  if (!inBounds(x, y, width, height) || state.lineClosed) return state;
  const next = cloneState(state);
  next.tool = "line";
  next.dot = null;
  next.mask = null;
  next.line.push([x, y]);
  return next;
}

export function closeLine(state: PromptState): PromptState {
  if (state.line.length < 2) return state;
  return { ...cloneState(state), lineClosed: true };
}

function paint(
  mask: MaskBuffer,
  cx: number,
  cy: number,
  radius: number,
  value: 0 | 1,
): void {
  const r2 = radius * radius;
  const x0 = Math.max(0, Math.floor(cx - radius));
  const x1 = Math.min(mask.width - 1, Math.ceil(cx + radius));
  const y0 = Math.max(0, Math.floor(cy - radius));
  const y1 = Math.min(mask.height - 1, Math.ceil(cy + radius));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      if ((x - cx) ** 2 + (y - cy) ** 2 <= r2) {
        mask.data[y * mask.width + x] = value;
      }
    }
  }
}

/** Brush tool paints disks into the mask; the eraser clears them. */
export function brushStroke(
  state: PromptState,
  cx: number,
  cy: number,
  radius: number,
  width: number,
  height: number,
  erase = false,
): PromptState {
  if (!inBounds(cx, cy, width, height)) return state;
  const next = cloneState(state);
  next.tool = erase ? "eraser" : "brush";
  next.dot = null;
  next.line = [];
  next.lineClosed = false;
  if (!next.mask || next.mask.width !== width || next.mask.height !== height) {
    next.mask = { width, height, data: new Uint8Array(width * height) };
  }
  paint(next.mask, cx, cy, radius, erase ? 0 : 1);
  return next;
}

export function hasPrompt(state: PromptState): boolean {
  if (state.dot) return true;
  if (state.line.length >= 2) return true;
  return state.mask !== null && state.mask.data.some((v) => v === 1);
}

/**
 * Serialize the editing state to the wire prompt, validating against the
 * service contract. Masks are encoded by the caller-supplied encoder
 * (canvas PNG in the browser, a stub in tests).
 */
export function serializePrompt(
  state: PromptState,
  width: number,
  height: number,
  encodeMask: (mask: MaskBuffer) => string,
): WirePrompt {
  let prompt: WirePrompt;
  if (state.dot) {
    prompt = { kind: "dot", points: [state.dot] };
  } else if (state.line.length >= 2) {
    prompt = { kind: "line", points: state.line.map(([x, y]) => [x, y]) };
  } else if (state.mask && state.mask.data.some((v) => v === 1)) {
    prompt = { kind: "subject_mask", mask: encodeMask(state.mask) };
  } else {
    throw new SchemaError("no prompt placed yet");
  }
  validatePrompt(prompt, width, height);
  return prompt;
}
