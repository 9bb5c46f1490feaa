/** Session state operations and URL-encodable sharing. */

import type { SessionState, SliderRef } from "./types.js";

export const DEFAULT_SESSION: SessionState = {
  prompt: "neutral",
  seed: 0,
  seedLocked: true,
  steps: null,
  stack: [],
};

export type StackResult = { ok: true; state: SessionState } | { ok: false; error: string };

export function addToStack(state: SessionState, ref: SliderRef): StackResult {
  if (state.stack.some((s) => s.name === ref.name)) {
    return { ok: false, error: `slider "${ref.name}" is already in the stack` };
  }
  return { ok: true, state: { ...state, stack: [...state.stack, ref] } };
}

export function removeFromStack(state: SessionState, name: string): SessionState {
  return { ...state, stack: state.stack.filter((s) => s.name !== name) };
}

export function updateStackScale(state: SessionState, name: string, scale: number): SessionState {
  return {
    ...state,
    stack: state.stack.map((s) => (s.name === name ? { ...s, scale } : s)),
  };
}

export function reorderStack(state: SessionState, order: string[]): SessionState {
  const byName = new Map(state.stack.map((s) => [s.name, s]));
  if (order.length !== state.stack.length || order.some((n) => !byName.has(n))) {
    return state;
  }
  return { ...state, stack: order.map((n) => byName.get(n)!) };
}

/** Encode the shareable parts of a session as a URL query string. */
export function encodeSession(state: SessionState): string {
  const params = new URLSearchParams();
  params.set("prompt", state.prompt);
  params.set("seed", String(state.seed));
  if (state.steps !== null) params.set("steps", String(state.steps));
  if (state.stack.length > 0) {
    params.set("stack", state.stack.map((s) => `${s.name}:${s.scale}`).join(","));
  }
  return params.toString();
}

export function decodeSession(query: string): SessionState {
  const params = new URLSearchParams(query);
  const state: SessionState = { ...DEFAULT_SESSION, stack: [] };
  const prompt = params.get("prompt");
  if (prompt) state.prompt = prompt;
  const seed = Number(params.get("seed"));
  if (Number.isInteger(seed) && seed >= 0) state.seed = seed;
  const steps = Number(params.get("steps"));
  if (params.has("steps") && Number.isInteger(steps) && steps > 0) state.steps = steps;
  const stack = params.get("stack");
  if (stack) {
    for (const part of stack.split(",")) {
      const i = part.lastIndexOf(":");
      if (i <= 0) continue;
      const name = part.slice(0, i);
      const scale = Number(part.slice(i + 1));
      if (!Number.isFinite(scale) || state.stack.some((s) => s.name === name)) continue;
      state.stack.push({ name, scale });
    }
  }
  return state;
}
