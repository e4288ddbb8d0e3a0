import { describe, expect, it } from "vitest";

import {
  BACKWARD, FORWARD, LEFT, RIGHT, advance, buildAction, newKeyState, press,
  release,
} from "../src/input.js";

describe("discrete key mapping", () => {
  it("maps single arrows to the four actions", () => {
    for (const [code, want] of [
      ["ArrowUp", FORWARD], ["ArrowDown", BACKWARD],
      ["ArrowLeft", LEFT], ["ArrowRight", RIGHT],
    ] as const) {
      const keys = newKeyState();
      press(keys, code);
      expect(buildAction("discrete", keys)).toBe(want);
    }
  });

  it("turns beat throttle: up plus right yields right", () => {
    const keys = newKeyState();
    press(keys, "ArrowUp");
    press(keys, "ArrowRight");
    expect(buildAction("discrete", keys)).toBe(RIGHT);
  });

  it("left beats right when both are held", () => {
    const keys = newKeyState();
    press(keys, "ArrowRight");
    press(keys, "ArrowLeft");
    expect(buildAction("discrete", keys)).toBe(LEFT);
  });

  it("no keys maps to the configured neutral action", () => {
    const keys = newKeyState();
    expect(buildAction("discrete", keys, FORWARD)).toBe(FORWARD);
    expect(buildAction("discrete", keys, BACKWARD)).toBe(BACKWARD);
  });

  it("released keys stop contributing", () => {
    const keys = newKeyState();
    press(keys, "ArrowLeft");
    release(keys, "ArrowLeft");
    expect(buildAction("discrete", keys)).toBe(FORWARD);
  });
});

describe("continuous hold-duration mapping", () => {
  it("ramps with hold time and clips to [-1, 1]", () => {
    const keys = newKeyState();
    press(keys, "KeyW");
    const short = buildAction("continuous", keys) as number[];
    expect(short[0]).toBeGreaterThan(0);
    expect(short[0]).toBeLessThan(0.2);
    advance(keys, 5.0);
    const long = buildAction("continuous", keys) as number[];
    expect(long[0]).toBe(1);
    expect(long[1]).toBe(0);
  });

  it("opposing keys cancel", () => {
    const keys = newKeyState();
    press(keys, "KeyW");
    press(keys, "KeyS");
    advance(keys, 2.0);
    const a = buildAction("continuous", keys) as number[];
    expect(a[0]).toBe(0);
  });

  it("lateral axis follows A and D", () => {
    const keys = newKeyState();
    press(keys, "KeyD");
    advance(keys, 2.0);
    const a = buildAction("continuous", keys) as number[];
    expect(a[1]).toBe(-1);
  });

  it("no keys is the zero vector", () => {
    const keys = newKeyState();
    expect(buildAction("continuous", keys)).toEqual([0, 0]);
  });
});
