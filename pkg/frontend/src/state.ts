// Pure client state: every displayed number originates in a server message.
// The reducer never invents, interpolates, or smooths power values.

import type { LeaderboardEntry, ServerMessage, StepSize } from "./protocol.js";

export const HISTORY_CAPACITY = 600;

export interface ChartPoint {
  seq: number; // arrival order of the power sample
  power: number;
}

export interface AttemptRow {
  attempt: number;
  mode: "finished" | "goal";
  startPower: number;
  endPower: number;
  steps: number;
  elapsedS: number;
  goalReached: boolean;
}

export interface UiSessionView {
  connection: "connecting" | "open" | "closed";
  role: "controller" | "observer";
  power: number | null;
  bestPower: number | null;
  goalPower: number | null;
  startPower: number | null;
  goalReached: boolean;
  attempt: number;
  stepCount: number;
  elapsedS: number;
  timerRunning: boolean; // starts on the first move after a reset
  history: ChartPoint[];
  nextSeq: number;
  attempts: AttemptRow[];
  leaderboard: LeaderboardEntry[];
  awaitingReply: boolean;
  stepSize: StepSize;
  perturbReset: boolean;
  showBestPower: boolean;
  lastError: string | null;
  lastClamped: boolean;
}

export function initialView(): UiSessionView {
  return {
    connection: "connecting",
    role: "controller",
    power: null,
    bestPower: null,
    goalPower: null,
    startPower: null,
    goalReached: false,
    attempt: 0,
    stepCount: 0,
    elapsedS: 0,
    timerRunning: false,
    history: [],
    nextSeq: 0,
    attempts: [],
    leaderboard: [],
    awaitingReply: false,
    stepSize: 1000,
    perturbReset: false,
    showBestPower: true,
    lastError: null,
    lastClamped: false,
  };
}

function pushPoints(view: UiSessionView, powers: number[]): void {
  for (const power of powers) {
    view.history.push({ seq: view.nextSeq++, power });
  }
  if (view.history.length > HISTORY_CAPACITY) {
    view.history.splice(0, view.history.length - HISTORY_CAPACITY);
  }
}

function closeAttempt(view: UiSessionView, goal: boolean): void {
  if (view.attempt === 0 || view.attempts.some((row) => row.attempt === view.attempt)) {
    return;
  }
  view.attempts.push({
    attempt: view.attempt,
    mode: goal ? "goal" : "finished",
    startPower: view.startPower ?? 0,
    endPower: view.power ?? 0,
    steps: view.stepCount,
    elapsedS: view.elapsedS,
    goalReached: goal,
  });
}

/** Apply one server message in place; returns the same view for chaining. */
export function applyMessage(view: UiSessionView, msg: ServerMessage): UiSessionView {
  if (msg.type === "error") {
    view.lastError = `${msg.code}: ${msg.detail}`;
    view.awaitingReply = false;
    return view;
  }
  if (msg.type === "leaderboard") {
    view.leaderboard = msg.entries;
    return view;
  }

  // state
  view.awaitingReply = false;
  view.lastError = null;
  view.role = msg.role;
  if (msg.attempt !== view.attempt) {
    // a new attempt began server-side; close out the one we were showing
    closeAttempt(view, view.goalReached);
    view.attempt = msg.attempt;
    view.startPower = msg.start_power;
    view.goalReached = false;
    view.timerRunning = false;
  }
  view.power = msg.power;
  view.bestPower = msg.best_power;
  view.goalPower = msg.goal_power;
  view.startPower = msg.start_power;
  view.stepCount = msg.step_count;
  view.elapsedS = msg.elapsed_s;
  view.lastClamped = msg.clamped;
  view.timerRunning = msg.step_count > 0 && !msg.goal_reached;
  pushPoints(view, msg.trace.length > 0 ? msg.trace : [msg.power]);
  if (msg.goal_reached && !view.goalReached) {
    view.goalReached = true;
    view.timerRunning = false;
    closeAttempt(view, true);
  }
  return view;
}

/** True exactly when the latest state carried goal_reached. */
export function goalBannerVisible(view: UiSessionView): boolean {
  return view.goalReached;
}
