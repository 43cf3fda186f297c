import { describe, expect, it } from "vitest";

import {
  addLineVertex,
  brushStroke,
  closeLine,
  emptyState,
  hasPrompt,
  placeDot,
  serializePrompt,
  statesEqual,
  switchTool,
} from "../src/prompt-state.js";
import { SchemaError, validatePrompt } from "../src/schema.js";

const W = 64;
const H = 48;
const encodeMask = () => "bWFzaw=="; // stub PNG encoder

describe("dot tool", () => {
  it("a click sets a single point, replacing the previous one", () => {
    let s = placeDot(emptyState(), 10, 12, W, H);
    expect(s.dot).toEqual([10, 12]);
    s = placeDot(s, 20, 30, W, H);
    expect(s.dot).toEqual([20, 30]);
    const prompt = serializePrompt(s, W, H, encodeMask);
    expect(prompt).toEqual({ kind: "dot", points: [[20, 30]] });
  });

  it("clicks outside the canvas are ignored", () => {
    const s0 = placeDot(emptyState(), 10, 12, W, H);
    expect(placeDot(s0, -5, 10, W, H)).toBe(s0);
    expect(placeDot(s0, 10, H, W, H)).toBe(s0);
  });
});

describe("line tool", () => {
  it("two clicks produce a two-vertex polyline", () => {
    let s = emptyState("line");
    s = addLineVertex(s, 1, 2, W, H);
    s = addLineVertex(s, 30, 40, W, H);
    const prompt = serializePrompt(s, W, H, encodeMask);
    expect(prompt).toEqual({ kind: "line", points: [[1, 2], [30, 40]] });
  });

  it("double-click closes the line against further vertices", () => {
    let s = emptyState("line");
    s = addLineVertex(s, 1, 2, W, H);
    s = addLineVertex(s, 5, 6, W, H);
    s = closeLine(s);
    const closed = s;
    s = addLineVertex(s, 9, 9, W, H);
    expect(statesEqual(s, closed)).toBe(true);
  });
});

describe("brush tool", () => {
  it("a stroke paints a nonempty mask at image resolution", () => {
    const s = brushStroke(emptyState("brush"), 10, 10, 3, W, H);
    expect(s.mask).not.toBeNull();
    expect(s.mask!.width).toBe(W);
    expect(s.mask!.height).toBe(H);
    expect(s.mask!.data[10 * W + 10]).toBe(1);
    const prompt = serializePrompt(s, W, H, encodeMask);
    expect(prompt.kind).toBe("subject_mask");
    expect(prompt.mask).toBe("bWFzaw==");
  });

  it("the eraser removes painted pixels", () => {
    let s = brushStroke(emptyState("brush"), 10, 10, 3, W, H);
    s = brushStroke(s, 10, 10, 5, W, H, true);
    expect(s.mask!.data.every((v) => v === 0)).toBe(true);
    expect(hasPrompt(s)).toBe(false);
  });
});

describe("tool switching", () => {
  it("clears the previous prompt", () => {
    const dotted = placeDot(emptyState(), 10, 12, W, H);
    const lined = switchTool(dotted, "line");
    expect(lined.dot).toBeNull();
    expect(hasPrompt(lined)).toBe(false);
  });

  it("eraser keeps the brush mask", () => {
    const brushed = brushStroke(emptyState("brush"), 10, 10, 3, W, H);
    const erasing = switchTool(brushed, "eraser");
    expect(erasing.mask).not.toBeNull();
    expect(hasPrompt(erasing)).toBe(true);
  });
});

describe("serialized prompts validate against the service contract", () => {
  it("all three tools emit schema-valid prompts", () => {
    const dot = serializePrompt(placeDot(emptyState(), 3, 4, W, H), W, H, encodeMask);
    validatePrompt(dot, W, H);

    let line = emptyState("line");
    line = addLineVertex(line, 0, 0, W, H);
    line = addLineVertex(line, 10, 20, W, H);
    validatePrompt(serializePrompt(line, W, H, encodeMask), W, H);

    const brush = brushStroke(emptyState("brush"), 30, 30, 4, W, H);
    validatePrompt(serializePrompt(brush, W, H, encodeMask), W, H);
  });

  it("an empty state refuses to serialize", () => {
    expect(() => serializePrompt(emptyState(), W, H, encodeMask)).toThrow(SchemaError);
  });

  it("out-of-bounds points are rejected by validation", () => {
    expect(() => validatePrompt({ kind: "dot", points: [[-1, 5]] }, W, H)).toThrow(
      SchemaError,
    );
    expect(() =>
      validatePrompt({ kind: "line", points: [[0, 0], [W, 5]] }, W, H),
    ).toThrow(SchemaError);
    expect(() => validatePrompt({ kind: "subject_mask" }, W, H)).toThrow(SchemaError);
  });
});
