// Wire types mirroring the service's JSON responses. All vectors are raw units.

export type ModelSummary = {
  id: string;
  feature_names: string[];
  target_names: string[];
  n_train: number;
};

export type ModelDetail = ModelSummary & {
  feature_ranges: [number, number][];
  target_ranges: [number, number][];
  n_cal: number;
  calibrations: { calibration_id: string; method: string; alpha: number }[];
};

export type ScatterResponse = {
  x: string;
  y: string;
  points: [number, number][];
};

export type Interval = {
  lower: number | null;
  upper: number | null;
  unbounded?: boolean;
};

export type PredictResponse = {
  point: number[];
  intervals: Interval[];
  method: string;
  alpha: number;
};

export type TrajectoryPoint = { x: number[]; loss: number; y?: number[] | null };

export type SearchResult = {
  x_start: number[];
  x_final: number[];
  loss_final: number;
  restart_index: number;
  trajectory: TrajectoryPoint[];
};

export type JobStatus = {
  job_id: string;
  status: 'queued' | 'running' | 'done' | 'failed';
  iteration: number;
  restart: number;
  trajectory: TrajectoryPoint[];
  trajectory_from: number;
  trajectory_total: number;
  result: SearchResult | null;
  intervals: Interval[] | null;
  point: number[] | null;
  error: string | null;
};

export type SearchRequest = {
  bounds: [number, number][];
  mask: number[];
  targets: { goal: number; weight: number }[];
  eta?: number;
  iters?: number;
  restarts?: number;
  seed?: number;
  base_point?: number[];
  alpha: number;
  method: string;
};
