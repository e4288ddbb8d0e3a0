// Pure session state machine. All protocol behavior lives here so it can be
// tested without a browser; rendering and socket plumbing stay thin.
//
// Lock-step compliance: at most one expert_action is ever sent for a given
// frame t (lastSentT guard); a server-side rejection clears the guard so the
// re-sent frame gets a fresh answer.

import {
  Action, ClientMessage, ServerMessage, ServerMetrics, StateFrame,
  StaticGeometry, parseServerMessage,
} from "./protocol.js";
import { ActionKind, FORWARD, KeyState, buildAction } from "./input.js";

export type Mode = "autonomous" | "awaiting_takeover" | "expert_driving";

export interface Counters {
  nswitch: number;
  expertFrames: number;
  monitoringSeconds: number;
}

export interface ViewModel {
  method: "rnd" | "hg";
  actionKind: ActionKind;
  neutral: number;
  mode: Mode;
  connection: "connecting" | "open" | "closed";
  frame: StateFrame | null;
  staticGeometry: StaticGeometry | null;
  tickHz: number;
  lastSentT: number | null;
  prevController: "novice" | "expert";
  prevEpisode: number | null;
  counters: Counters;
  serverMetrics: ServerMetrics | null;
  ended: boolean;
  errorBadge: string | null;
  ignoredInput: boolean; // set when keys arrive outside expert control
  expectedSession: string | null; // from the URL query, verified against frames
}

export function newViewModel(method: "rnd" | "hg" = "rnd",
                             actionKind: ActionKind = "discrete"): ViewModel {
  return {
    method,
    actionKind,
    neutral: FORWARD,
    mode: "autonomous",
    connection: "connecting",
    frame: null,
    staticGeometry: null,
    tickHz: 0,
    lastSentT: null,
    prevController: "novice",
    prevEpisode: null,
    counters: { nswitch: 0, expertFrames: 0, monitoringSeconds: 0 },
    serverMetrics: null,
    ended: false,
    errorBadge: null,
    ignoredInput: false,
    expectedSession: null,
  };
}

function maybeExpertAction(vm: ViewModel, frame: StateFrame,
                           keys: KeyState): ClientMessage[] {
  if (frame.controller !== "expert") return [];
  if (vm.method === "rnd" && vm.mode !== "expert_driving") return [];
  if (vm.lastSentT === frame.t) return []; // never two actions for one t
  vm.lastSentT = frame.t;
  const action: Action = buildAction(vm.actionKind, keys, vm.neutral);
  return [{ type: "expert_action", t: frame.t, action }];
}

export function handleRaw(vm: ViewModel, raw: string, keys: KeyState): ClientMessage[] {
  const msg = parseServerMessage(raw);
  if (msg === null) {
    vm.errorBadge = "malformed message from server";
    return [];
  }
  return handleMessage(vm, msg, keys);
}

export function handleMessage(vm: ViewModel, msg: ServerMessage,
                              keys: KeyState): ClientMessage[] {
  switch (msg.type) {
    case "session_control": {
      if (msg.action === "start") {
        vm.connection = "open";
        vm.ended = false;
        vm.staticGeometry = msg.geometry ?? null;
        vm.tickHz = msg.tick_hz ?? 0;
        const cfg = msg.config ?? {};
        if (cfg["method"] === "hg" || cfg["method"] === "rnd") {
          vm.method = cfg["method"] as "rnd" | "hg";
        }
        if (cfg["env"] === "pointdash") vm.actionKind = "continuous";
      } else {
        vm.ended = true;
        vm.serverMetrics = msg.metrics ?? null;
        if (msg.action === "abort") vm.errorBadge = msg.detail ?? "session aborted";
      }
      return [];
    }
    case "takeover_request": {
      if (vm.method === "rnd" && vm.mode !== "expert_driving") {
        vm.mode = "awaiting_takeover";
      }
      return [];
    }
    case "error": {
      vm.errorBadge = msg.detail;
      vm.lastSentT = null; // the frame will be re-sent; answer it afresh
      return [];
    }
    case "state_frame": {
      const frame = msg;
      if (vm.expectedSession !== null && frame.session !== vm.expectedSession) {
        vm.errorBadge = `frame from unexpected session ${frame.session}`;
        return [];
      }
      const duplicate = vm.frame !== null && vm.frame.episode === frame.episode
        && vm.frame.t === frame.t; // re-sent after a rejected action
      if (vm.prevEpisode !== frame.episode) {
        vm.prevController = "novice";
        vm.prevEpisode = frame.episode;
      }
      if (frame.controller === "expert") {
        if (!duplicate) {
          vm.counters.expertFrames += 1;
          if (vm.prevController === "novice") vm.counters.nswitch += 1;
        }
      } else if (vm.method === "rnd" && vm.mode === "expert_driving") {
        vm.mode = "autonomous"; // the gate handed control back
      }
      vm.prevController = frame.controller;
      vm.frame = frame;
      return maybeExpertAction(vm, frame, keys);
    }
  }
}

/** First input while a takeover is pending: the human engages and the frozen
 * frame gets its action. */
export function engage(vm: ViewModel, keys: KeyState): ClientMessage[] {
  if (vm.mode !== "awaiting_takeover") return [];
  vm.mode = "expert_driving";
  if (vm.frame !== null) return maybeExpertAction(vm, vm.frame, keys);
  return [];
}

/** hg mode: the dedicated key toggles takeover / handback. */
export function toggleControl(vm: ViewModel): ClientMessage[] {
  if (vm.method !== "hg" || vm.frame === null || vm.ended) return [];
  if (vm.mode === "expert_driving") {
    vm.mode = "autonomous";
    return [{ type: "handback", t: vm.frame.t }];
  }
  vm.mode = "expert_driving";
  return [{ type: "takeover", t: vm.frame.t }];
}

/** Key events outside expert control are ignored but visibly indicated. */
export function noteIgnoredInput(vm: ViewModel): void {
  if (vm.mode === "autonomous") vm.ignoredInput = true;
}

export function addMonitoringTime(vm: ViewModel, dtSeconds: number): void {
  if (!vm.ended) vm.counters.monitoringSeconds += dtSeconds;
}

/** End-of-session reconciliation against the server's metrics message. */
export function countersMatchServer(vm: ViewModel): boolean {
  const m = vm.serverMetrics;
  if (m === null) return false;
  const switchOk = m.nswitch === null || m.nswitch === vm.counters.nswitch;
  return switchOk && m.expert_frames === vm.counters.expertFrames;
}
