// Keyboard state -> environment action.
//
// Discrete environments take exactly one action per tick. Turn keys beat
// throttle keys, and left beats right when both are held (documented
// priority, so holding up+right steers right rather than accelerating).
// The continuous environment maps WASD hold durations onto the two
// acceleration axes, ramping to full deflection over RAMP_SECONDS.

import { Action } from "./protocol.js";

export type ActionKind = "discrete" | "continuous";

export const FORWARD = 0;
export const BACKWARD = 1;
export const LEFT = 2;
export const RIGHT = 3;

export const RAMP_SECONDS = 0.6;

export interface KeyState {
  // held key -> seconds held (callers update continuously)
  held: Map<string, number>;
}

export function newKeyState(): KeyState {
  return { held: new Map() };
}

export function press(keys: KeyState, code: string): void {
  if (!keys.held.has(code)) keys.held.set(code, 0);
}

export function release(keys: KeyState, code: string): void {
  keys.held.delete(code);
}

export function advance(keys: KeyState, dtSeconds: number): void {
  for (const code of keys.held.keys()) {
    keys.held.set(code, (keys.held.get(code) ?? 0) + dtSeconds);
  }
}

const DISCRETE_PRIORITY: Array<[string, number]> = [
  ["ArrowLeft", LEFT],
  ["ArrowRight", RIGHT],
  ["ArrowUp", FORWARD],
  ["ArrowDown", BACKWARD],
];

function ramp(seconds: number | undefined): number {
  if (seconds === undefined) return 0;
  return Math.min(1, (seconds + 0.05) / RAMP_SECONDS);
}

export function buildAction(
  kind: ActionKind,
  keys: KeyState,
  neutral: number = FORWARD,
): Action {
  if (kind === "discrete") {
    for (const [code, action] of DISCRETE_PRIORITY) {
      if (keys.held.has(code)) return action;
    }
    return neutral;
  }
  // continuous corridor: W/S drive the forward axis, A/D the lateral one
  const ax = ramp(keys.held.get("KeyW")) - ramp(keys.held.get("KeyS"));
  const ay = ramp(keys.held.get("KeyA")) - ramp(keys.held.get("KeyD"));
  return [clip(ax), clip(ay)];
}

function clip(v: number): number {
  return Math.max(-1, Math.min(1, v));
}

export const TOGGLE_KEY = "Space"; // hg mode: takeover / handback
