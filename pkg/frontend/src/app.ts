/**
 * Application controller wiring prompt state, history, transport and
 * notices together. DOM-free so it is fully testable; main.ts binds it to
 * the canvas and buttons.
 */

import { ApiError, Transport, submitInfer } from "./api.js";
import { History } from "./history.js";
import { NoticeStore } from "./notices.js";
import {
  MaskBuffer,
  PromptState,
  Tool,
  addLineVertex,
  brushStroke,
  closeLine,
  emptyState,
  hasPrompt,
  placeDot,
  serializePrompt,
  statesEqual,
  switchTool,
} from "./prompt-state.js";
import { InferResponse } from "./schema.js";

export interface ResultLayers {
  removal: string;
  mask?: string;
  overlay?: string;
  timingMs: number;
}

export interface AppConfig {
  baseUrl: string;
  transport: Transport;
  encodeMask: (mask: MaskBuffer) => string;
  /** asks the user to confirm discarding the prompt on tool switch */
  confirmDiscard?: () => boolean;
}

export class App {
  state: PromptState = emptyState();
  readonly history = new History();
  readonly notices = new NoticeStore();
  result: ResultLayers | null = null;
  overlayVisible = true;
  pending = false;
  image: { data: string; width: number; height: number } | null = null;
  brushRadius = 8;
  private renderListeners: Array<() => void> = [];

  constructor(private readonly config: AppConfig) {}

  onRender(fn: () => void): void {
    this.renderListeners.push(fn);
  }

  private render(): void {
    for (const fn of this.renderListeners) fn();
  }

  loadImage(data: string, width: number, height: number): void {
    this.image = { data, width, height };
    this.state = emptyState(this.state.tool);
    this.history.clear();
    this.result = null;
    this.render();
  }

  selectTool(tool: Tool): void {
    if (tool === this.state.tool) return;
    if (hasPrompt(this.state) && this.config.confirmDiscard && !this.config.confirmDiscard()) {
      return;
    }
    this.apply(switchTool(this.state, tool));
  }

  /** Route a pointer event through the active tool. */
  pointer(x: number, y: number, kind: "click" | "dblclick" | "drag"): void {
    if (!this.image) return;
    const { width, height } = this.image;
    let next = this.state;
    switch (this.state.tool) {
      case "dot":
        if (kind === "click") next = placeDot(this.state, x, y, width, height);
        break;
      case "line":
        if (kind === "dblclick") next = closeLine(addLineVertex(this.state, x, y, width, height));
        else if (kind === "click") next = addLineVertex(this.state, x, y, width, height);
        break;
      case "brush":
        next = brushStroke(this.state, x, y, this.brushRadius, width, height, false);
        break;
      case "eraser":
        next = brushStroke(this.state, x, y, this.brushRadius, width, height, true);
        break;
    }
    this.apply(next);
  }

  private apply(next: PromptState): void {
    if (statesEqual(next, this.state)) return;
    this.history.push(this.state);
    this.state = next;
    this.render();
  }

  undo(): void {
    const prev = this.history.undo(this.state);
    if (prev) {
      this.state = prev;
      this.render();
    }
  }

  redo(): void {
    const next = this.history.redo(this.state);
    if (next) {
      this.state = next;
      this.render();
    }
  }

  toggleOverlay(): void {
    this.overlayVisible = !this.overlayVisible;
    this.render();
  }

  async submit(): Promise<void> {
    if (!this.image || this.pending) return;
    const { width, height } = this.image;
    let prompt;
    try {
      prompt = serializePrompt(this.state, width, height, this.config.encodeMask);
    } catch (err) {
      this.notices.add("error", err instanceof Error ? err.message : String(err));
      return;
    }
    this.pending = true;
    this.render();
    try {
      const resp: InferResponse = await submitInfer(
        this.config.transport,
        this.config.baseUrl,
        {
          image: this.image.data,
          prompt,
          options: { return_mask: true, return_overlay: true },
        },
        { width, height },
      );
      this.result = {
        removal: resp.removal,
        mask: resp.mask,
        overlay: resp.overlay,
        timingMs: resp.timing_ms,
      };
    } catch (err) {
      if (err instanceof ApiError) {
        this.notices.add("error", err.message, err.retryable);
      } else {
        this.notices.add("error", String(err));
      }
    } finally {
      this.pending = false;
      this.render();
    }
  }
}
