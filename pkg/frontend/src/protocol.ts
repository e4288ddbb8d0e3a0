// Wire protocol shared with the session server: JSON text messages over a
// WebSocket. Field names and shapes mirror the server exactly.

export interface StateFrame {
  type: "state_frame";
  session: string;
  seq: number;
  episode: number;
  t: number;
  observation: number[];
  geometry: { pose: number[]; goal?: number[]; walls?: number[][] };
  measure: number | null;
  threshold: number | null;
  controller: "novice" | "expert";
  dwell: number | null;
  autonomous: boolean;
}

export interface SessionControl {
  type: "session_control";
  action: "start" | "end" | "abort";
  session?: string;
  config?: Record<string, unknown>;
  digest?: string;
  tick_hz?: number;
  geometry?: StaticGeometry;
  metrics?: ServerMetrics;
  detail?: string;
}

export interface TakeoverRequest {
  type: "takeover_request";
  t: number;
  reason: "gate" | "human";
}

export interface ServerError {
  type: "error";
  detail: string;
  expected_t?: number;
  got_t?: number;
}

export interface ServerMetrics {
  task_performance: number;
  dataset_size: number;
  nswitch: number | null;
  expert_frames: number;
  monitoring_frames: number | null;
}

export interface StaticGeometry {
  kind: "track" | "grid" | "corridor";
  walls?: number[][];
  cells?: number[][];
  bounds: number[];
  y_half?: number;
  wavelength?: number;
}

export type ServerMessage = StateFrame | SessionControl | TakeoverRequest | ServerError;

export type Action = number | number[];

export interface ExpertActionMsg {
  type: "expert_action";
  t: number;
  action: Action;
}

export interface ControlToggleMsg {
  type: "takeover" | "handback";
  t: number;
}

export type ClientMessage = ExpertActionMsg | ControlToggleMsg;

export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as Record<string, unknown>;
  switch (msg.type) {
    case "state_frame":
      if (
        typeof msg.t !== "number" ||
        !Array.isArray(msg.observation) ||
        (msg.controller !== "novice" && msg.controller !== "expert") ||
        typeof msg.geometry !== "object" || msg.geometry === null
      ) {
        return null;
      }
      return msg as unknown as StateFrame;
    case "session_control":
      if (typeof msg.action !== "string") return null;
      return msg as unknown as SessionControl;
    case "takeover_request":
      if (typeof msg.t !== "number") return null;
      return msg as unknown as TakeoverRequest;
    case "error":
      return msg as unknown as ServerError;
    default:
      return null;
  }
}

export function serializeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}
