// Browser wiring: socket, keyboard, visibility-gated monitoring timer,
// render loop. Configuration comes from the URL query:
//   index.html?server=ws://127.0.0.1:8765&neutral=0

import { serializeClientMessage } from "./protocol.js";
import {
  KeyState, TOGGLE_KEY, advance, newKeyState, press, release,
} from "./input.js";
import {
  addMonitoringTime, engage, handleRaw, newViewModel, noteIgnoredInput,
  toggleControl, ViewModel,
} from "./viewmodel.js";
import { renderFrame } from "./render.js";

const params = new URLSearchParams(window.location.search);
const serverUrl = params.get("server") ?? "ws://127.0.0.1:8765";
const vm: ViewModel = newViewModel();
if (params.get("neutral") !== null) vm.neutral = Number(params.get("neutral"));
vm.expectedSession = params.get("session");
const keys: KeyState = newKeyState();
const canvas = document.getElementById("scene") as HTMLCanvasElement;

const socket = new WebSocket(serverUrl);
socket.onopen = () => { vm.connection = "open"; };
socket.onclose = () => { vm.connection = "closed"; };
socket.onmessage = (event) => {
  for (const out of handleRaw(vm, String(event.data), keys)) {
    socket.send(serializeClientMessage(out));
  }
};

const DRIVE_KEYS = new Set([
  "ArrowUp", "ArrowDown", "ArrowLeft", "ArrowRight",
  "KeyW", "KeyA", "KeyS", "KeyD",
]);

window.addEventListener("keydown", (e) => {
  if (e.code === TOGGLE_KEY) {
    e.preventDefault();
    for (const out of toggleControl(vm)) {
      socket.send(serializeClientMessage(out));
    }
    return;
  }
  if (!DRIVE_KEYS.has(e.code)) return;
  e.preventDefault();
  press(keys, e.code);
  if (vm.mode === "awaiting_takeover") {
    for (const out of engage(vm, keys)) {
      socket.send(serializeClientMessage(out));
    }
  } else {
    noteIgnoredInput(vm);
  }
});

window.addEventListener("keyup", (e) => {
  if (DRIVE_KEYS.has(e.code)) release(keys, e.code);
});

// monitoring time accrues only while the tab is visible
let lastTick = performance.now();
setInterval(() => {
  const now = performance.now();
  const dt = (now - lastTick) / 1000;
  lastTick = now;
  advance(keys, dt);
  if (document.visibilityState === "visible") addMonitoringTime(vm, dt);
}, 100);

function paint(): void {
  renderFrame(canvas, vm);
  requestAnimationFrame(paint);
}
requestAnimationFrame(paint);
