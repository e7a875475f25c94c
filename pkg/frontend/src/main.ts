// DOM wiring and WebSocket client. One command in flight at a time.

import { drawChart } from "./chart.js";
import {
  buildMove,
  buildReset,
  STEP_SIZES,
  type ClientCommand,
  type ServerMessage,
  type StepSize,
} from "./protocol.js";
import { applyMessage, goalBannerVisible, initialView } from "./state.js";

const AXIS_LABELS = ["mirror 1 x", "mirror 1 y", "mirror 2 x", "mirror 2 y"];

const view = initialView();
let socket: WebSocket | null = null;

const $ = (id: string) => document.getElementById(id)!;

function send(command: ClientCommand): boolean {
  if (!socket || socket.readyState !== WebSocket.OPEN) {
    toast("not connected");
    return false;
  }
  if (view.awaitingReply) {
    return false; // debounce: wait for the state reply
  }
  view.awaitingReply = true;
  socket.send(JSON.stringify(command));
  render();
  return true;
}

function toast(text: string): void {
  const el = $("toast");
  el.textContent = text;
  el.classList.add("visible");
  setTimeout(() => el.classList.remove("visible"), 1800);
}

function fmtPower(p: number | null): string {
  return p === null ? "--" : (100 * p).toFixed(1) + "%";
}

function render(): void {
  $("power-readout").textContent = fmtPower(view.power);
  $("goal-readout").textContent = fmtPower(view.goalPower);
  $("best-readout").textContent = view.showBestPower ? fmtPower(view.bestPower) : "hidden";
  $("timer-readout").textContent = view.elapsedS.toFixed(0) + " s";
  $("steps-readout").textContent = String(view.stepCount);
  $("attempt-readout").textContent = view.attempt ? `#${view.attempt}` : "--";
  $("conn-banner").classList.toggle("hidden", view.connection === "open");
  $("goal-banner").classList.toggle("hidden", !goalBannerVisible(view));
  $("role-note").classList.toggle("hidden", view.role !== "observer");
  document.querySelectorAll<HTMLButtonElement>("button[data-move]").forEach((b) => {
    b.disabled = view.connection !== "open" || view.awaitingReply
      || view.goalReached || view.role === "observer";
  });
  ($("error-line") as HTMLElement).textContent = view.lastError ?? "";

  const rows = view.attempts
    .slice(-12)
    .reverse()
    .map((a) =>
      `<tr><td>#${a.attempt}</td><td>${a.goalReached ? "goal" : "ended"}</td>` +
      `<td>${fmtPower(a.startPower)}</td><td>${fmtPower(a.endPower)}</td>` +
      `<td>${a.steps}</td><td>${a.elapsedS.toFixed(0)} s</td></tr>`)
    .join("");
  $("attempt-rows").innerHTML = rows;

  const board = view.leaderboard
    .map((e, i) => `<li>${i + 1}. ${e.name} — ${e.elapsed_s.toFixed(0)} s / ${e.steps} moves</li>`)
    .join("");
  $("leaderboard-list").innerHTML = board || "<li>no goals yet</li>";

  drawChart($("chart") as HTMLCanvasElement, view);
}

function onMessage(raw: MessageEvent<string>): void {
  const msg = JSON.parse(raw.data) as ServerMessage;
  const wasGoal = view.goalReached;
  applyMessage(view, msg);
  if (!wasGoal && view.goalReached) {
    toast("goal reached!");
  }
  render();
}

function connect(): void {
  const url = (location.protocol === "https:" ? "wss://" : "ws://") + location.host + "/ws";
  socket = new WebSocket(url);
  view.connection = "connecting";
  socket.onopen = () => {
    view.connection = "open";
    view.awaitingReply = false;
    const name = (localStorage.getItem("player") ?? "").trim() || "anonymous";
    send({ cmd: "hello", name });
  };
  socket.onmessage = onMessage;
  socket.onclose = () => {
    view.connection = "closed";
    view.awaitingReply = false;
    render();
    setTimeout(connect, 1500);
  };
}

function buildControls(): void {
  const panel = $("axes");
  AXIS_LABELS.forEach((label, axis) => {
    const row = document.createElement("div");
    row.className = "axis-row";
    const minus = document.createElement("button");
    minus.textContent = "−";
    minus.dataset.move = `${axis}:-1`;
    const name = document.createElement("span");
    name.textContent = label;
    const plus = document.createElement("button");
    plus.textContent = "+";
    plus.dataset.move = `${axis}:+1`;
    row.append(minus, name, plus);
    panel.append(row);
  });
  panel.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const spec = target.dataset.move;
    if (!spec) return;
    const [axis, dir] = spec.split(":").map(Number);
    send(buildMove(axis, dir as 1 | -1, view.stepSize));
  });

  const sizes = $("step-sizes");
  STEP_SIZES.forEach((size) => {
    const btn = document.createElement("button");
    btn.textContent = size.toLocaleString();
    btn.className = size === view.stepSize ? "active" : "";
    btn.addEventListener("click", () => {
      view.stepSize = size as StepSize;
      sizes.querySelectorAll("button").forEach((b) => b.classList.remove("active"));
      btn.classList.add("active");
    });
    sizes.append(btn);
  });

  $("reset-btn").addEventListener("click", () => send(buildReset(view.perturbReset)));
  $("end-btn").addEventListener("click", () => send({ cmd: "end_attempt" }));
  ($("perturb-toggle") as HTMLInputElement).addEventListener("change", (e) => {
    view.perturbReset = (e.target as HTMLInputElement).checked;
  });
  ($("best-toggle") as HTMLInputElement).addEventListener("change", (e) => {
    view.showBestPower = (e.target as HTMLInputElement).checked;
    render();
  });
}

buildControls();
connect();
render();
