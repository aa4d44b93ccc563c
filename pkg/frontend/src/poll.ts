// Job polling: 500 ms interval backing off to 2 s, appending trajectory
// suffixes without ever re-fetching points already seen.

import type { Client } from './api';
import type { Interval, JobStatus, SearchResult, TrajectoryPoint } from './types';

export type PollUpdate = {
  status: JobStatus['status'];
  iteration: number;
  restart: number;
  trajectory: TrajectoryPoint[]; // cumulative
};

export type PollOutcome = {
  status: 'done' | 'failed';
  trajectory: TrajectoryPoint[];
  result: SearchResult | null;
  intervals: Interval[] | null;
  point: number[] | null;
  error: string | null;
};

export const INITIAL_POLL_MS = 500;
export const MAX_POLL_MS = 2000;
export const BACKOFF = 1.5;

export function nextDelay(current: number): number {
  return Math.min(current * BACKOFF, MAX_POLL_MS);
}

export async function pollJob(
  client: Client,
  jobId: string,
  onUpdate?: (u: PollUpdate) => void,
  sleep: (ms: number) => Promise<void> = (ms) => new Promise((r) => setTimeout(r, ms)),
): Promise<PollOutcome> {
  const trajectory: TrajectoryPoint[] = [];
  let delay = INITIAL_POLL_MS;
  for (;;) {
    const snap = await client.job(jobId, trajectory.length);
    trajectory.push(...snap.trajectory);
    onUpdate?.({
      status: snap.status,
      iteration: snap.iteration,
      restart: snap.restart,
      trajectory,
    });
    if (snap.status === 'done' || snap.status === 'failed') {
      return {
        status: snap.status,
        trajectory,
        result: snap.result,
        intervals: snap.intervals,
        point: snap.point,
        error: snap.error,
      };
    }
    await sleep(delay);
    delay = nextDelay(delay);
  }
}
