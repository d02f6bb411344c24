// UI action availability is a pure function of lifecycle state, driven by
// the fixture shared with the backend test suite. No other signal may
// enable or disable a lifecycle button.

import stateActions from "../shared/state-actions.json";
import type { LifecycleState } from "./types";

export type UiAction =
  | "train"
  | "retrain"
  | "approve"
  | "reject"
  | "rollback"
  | "archive"
  | "infer"
  | "delete";

const TABLE = stateActions as Record<LifecycleState, UiAction[]>;

export function actionsFor(state: LifecycleState): UiAction[] {
  return TABLE[state] ?? [];
}

export function actionEnabled(state: LifecycleState, action: UiAction): boolean {
  return actionsFor(state).includes(action);
}

export const ALL_STATES = Object.keys(TABLE) as LifecycleState[];
