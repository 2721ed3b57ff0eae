// Service payload shapes, mirrored from docs/service-schema.md. The UI
// renders these verbatim; it never derives metrics of its own.

export interface Progress {
  n: number;
  n_max: number;
}

export interface Trajectory {
  time: number[];
  signals: Record<string, number[]>;
  extras: Record<string, number[]>;
}

export interface ExperimentView {
  index: number;
  theta: Record<string, number>;
  status: string;
  metrics: Record<string, number>;
  trajectory: Trajectory;
}

export interface HistoryRow {
  index: number;
  theta: Record<string, number>;
  status: string;
  score: number;
  metrics: Record<string, number>;
}

interface QueryViewBase {
  id: string;
  scenario: string;
  progress: Progress;
  display: Record<string, any>;
}

/** A pending comparison: pair[0] is the left panel, pair[1] the right. */
export interface ActiveQueryView extends QueryViewBase {
  type: "query";
  pair: [ExperimentView, ExperimentView];
  incumbent: number;
}

export interface FinishedView extends QueryViewBase {
  type: "finished";
  incumbent: ExperimentView;
  history: HistoryRow[];
}

export type QueryView = ActiveQueryView | FinishedView;

export interface SessionRow {
  id: string;
  scenario?: string;
  phase?: string;
  n?: number;
  n_max?: number;
  created?: string;
  updated?: string;
  error?: string;
}

export interface SessionList {
  sessions: SessionRow[];
}

export type Choice = "left" | "right" | "tie";

/**
 * Preference encoding posted to the service: the left panel is the first
 * index of the served pair, so left-better is b = -1, right-better is
 * b = +1, and "as good as" is the tie b = 0.
 */
export function choiceToB(choice: Choice): -1 | 0 | 1 {
  switch (choice) {
    case "left":
      return -1;
    case "tie":
      return 0;
    case "right":
      return 1;
  }
}
