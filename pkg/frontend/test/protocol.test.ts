import { describe, expect, it } from "vitest";

import { parseServerMessage, serializeClientMessage } from "../src/protocol.js";

describe("message parsing", () => {
  it("accepts well-formed frames", () => {
    const msg = parseServerMessage(JSON.stringify({
      type: "state_frame", session: "s", seq: 3, episode: 1, t: 12,
      observation: [1, 2, 3], geometry: { pose: [0, 0] },
      measure: 0.5, threshold: 1.2, controller: "novice", dwell: 0,
      autonomous: true,
    }));
    expect(msg?.type).toBe("state_frame");
  });

  it("rejects frames with missing or mistyped fields", () => {
    expect(parseServerMessage("not json at all")).toBeNull();
    expect(parseServerMessage("42")).toBeNull();
    expect(parseServerMessage('{"type":"state_frame"}')).toBeNull();
    expect(parseServerMessage(JSON.stringify({
      type: "state_frame", t: 1, observation: [], controller: "pilot",
      geometry: { pose: [] },
    }))).toBeNull();
    expect(parseServerMessage('{"type":"florb"}')).toBeNull();
  });

  it("parses control and error messages", () => {
    expect(parseServerMessage('{"type":"takeover_request","t":4,"reason":"gate"}')?.type)
      .toBe("takeover_request");
    expect(parseServerMessage('{"type":"session_control","action":"end"}')?.type)
      .toBe("session_control");
    expect(parseServerMessage('{"type":"error","detail":"stale"}')?.type).toBe("error");
  });
});

describe("client serialization", () => {
  it("round-trips through JSON", () => {
    const text = serializeClientMessage({ type: "expert_action", t: 9, action: 2 });
    expect(JSON.parse(text)).toEqual({ type: "expert_action", t: 9, action: 2 });
    const vec = serializeClientMessage({ type: "expert_action", t: 1, action: [0.5, -1] });
    expect(JSON.parse(vec).action).toEqual([0.5, -1]);
  });
});
