// Wire types, mirroring the bridge server's pydantic models.

export interface StateMessage {
  type: "state";
  power: number;
  trace: number[];
  step_count: number;
  elapsed_s: number;
  goal_reached: boolean;
  best_power: number;
  goal_power: number;
  attempt: number;
  start_power: number;
  clamped: boolean;
  role: "controller" | "observer";
}

export interface ErrorMessage {
  type: "error";
  code: string;
  detail: string;
}

export interface LeaderboardEntry {
  name: string;
  elapsed_s: number;
  steps: number;
}

export interface LeaderboardMessage {
  type: "leaderboard";
  entries: LeaderboardEntry[];
}

export type ServerMessage = StateMessage | ErrorMessage | LeaderboardMessage;

export type ResetMode = "auto" | "perturb";

export interface MoveCommand {
  cmd: "move";
  steps: [number, number, number, number];
}

export interface ResetCommand {
  cmd: "reset";
  mode: ResetMode;
}

export interface HelloCommand {
  cmd: "hello";
  name?: string;
}

export interface EndAttemptCommand {
  cmd: "end_attempt";
}

export type ClientCommand = MoveCommand | ResetCommand | HelloCommand | EndAttemptCommand;

export const STEP_SIZES = [100, 1000, 6000] as const;
export type StepSize = (typeof STEP_SIZES)[number];

export function buildMove(axis: number, direction: 1 | -1, stepSize: StepSize): MoveCommand {
  const steps: [number, number, number, number] = [0, 0, 0, 0];
  steps[axis] = direction * stepSize;
  return { cmd: "move", steps };
}

export function buildReset(perturb: boolean): ResetCommand {
  return { cmd: "reset", mode: perturb ? "perturb" : "auto" };
}
