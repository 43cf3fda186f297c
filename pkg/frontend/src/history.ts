/**
 * Undo/redo over prompt snapshots. Undo restores the exact prior state;
 * redo is its exact inverse until a new edit truncates the redo branch.
 */

import { PromptState, cloneState } from "./prompt-state.js";

const MAX_HISTORY = 100;

export class History {
  private past: PromptState[] = [];
  private future: PromptState[] = [];

  /** Record the state that is being replaced by a new edit. */
  push(state: PromptState): void {
    this.past.push(cloneState(state));
    if (this.past.length > MAX_HISTORY) {
      this.past.shift();
    }
    this.future = [];
  }

  canUndo(): boolean {
    return this.past.length > 0;
  }

  canRedo(): boolean {
    return this.future.length > 0;
  }

  undo(current: PromptState): PromptState | null {
    const prev = this.past.pop();
    if (!prev) return null;
    this.future.push(cloneState(current));
    return prev;
  }

  redo(current: PromptState): PromptState | null {
    const next = this.future.pop();
    if (!next) return null;
    this.past.push(cloneState(current));
    return next;
  }

  clear(): void {
    this.past = [];
    this.future = [];
  }
}
