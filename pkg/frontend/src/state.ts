// Explorer state: per-feature and per-target controls, plot axes, coverage
// level. Serializes losslessly to a URL query string and builds the search
// request (never any numeric computation beyond assembling control values).

import type { ModelDetail, SearchRequest } from './types';

export type FeatureControl = {
  name: string;
  fixed: boolean;
  value: number; // used when fixed (base point coordinate)
  lo: number;
  hi: number;
};

export type TargetControl = {
  name: string;
  goal: number;
  weight: number;
};

export type ExplorerState = {
  modelId: string;
  xAxis: string;
  yAxis: string;
  alpha: number;
  method: string;
  features: FeatureControl[];
  targets: TargetControl[];
};

export function defaultState(detail: ModelDetail): ExplorerState {
  const features = detail.feature_names.map((name, i) => {
    const [lo, hi] = detail.feature_ranges[i];
    return { name, fixed: false, value: (lo + hi) / 2, lo, hi };
  });
  const targets = detail.target_names.map((name, i) => {
    const [, hi] = detail.target_ranges[i];
    return { name, goal: hi, weight: 1.0 };
  });
  return {
    modelId: detail.id,
    xAxis: detail.feature_names[0],
    yAxis: detail.target_names[0],
    alpha: 0.2,
    method: 'confmc',
    features,
    targets,
  };
}

export function rangeErrors(state: ExplorerState): Map<string, string> {
  const errors = new Map<string, string>();
  for (const f of state.features) {
    if (f.lo > f.hi) {
      errors.set(f.name, `lower bound ${f.lo} exceeds upper bound ${f.hi}`);
    }
  }
  return errors;
}

export function buildSearchRequest(
  state: ExplorerState,
  opts: { iters?: number; restarts?: number; seed?: number; eta?: number } = {},
): SearchRequest {
  if (rangeErrors(state).size > 0) {
    throw new Error('range controls are infeasible');
  }
  return {
    bounds: state.features.map((f) => [f.lo, f.hi] as [number, number]),
    mask: state.features.map((f) => (f.fixed ? 0 : 1)),
    base_point: state.features.map((f) => f.value),
    targets: state.targets.map((t) => ({ goal: t.goal, weight: t.weight })),
    alpha: state.alpha,
    method: state.method,
    ...opts,
  };
}

// URL round trip: every control value survives serialize -> parse exactly.
// Numbers are encoded with full precision via String().

export function stateToQuery(state: ExplorerState): string {
  const q = new URLSearchParams();
  q.set('model', state.modelId);
  q.set('x', state.xAxis);
  q.set('y', state.yAxis);
  q.set('alpha', String(state.alpha));
  q.set('method', state.method);
  for (const f of state.features) {
    q.set(`f.${f.name}`, [f.fixed ? 1 : 0, f.value, f.lo, f.hi].map(String).join('~'));
  }
  for (const t of state.targets) {
    q.set(`t.${t.name}`, [t.goal, t.weight].map(String).join('~'));
  }
  return q.toString();
}

export function stateFromQuery(query: string): ExplorerState | null {
  const q = new URLSearchParams(query);
  const modelId = q.get('model');
  if (!modelId) return null;
  const features: FeatureControl[] = [];
  const targets: TargetControl[] = [];
  for (const [key, raw] of q.entries()) {
    if (key.startsWith('f.')) {
      const [fixed, value, lo, hi] = raw.split('~');
      features.push({
        name: key.slice(2),
        fixed: fixed === '1',
        value: Number(value),
        lo: Number(lo),
        hi: Number(hi),
      });
    } else if (key.startsWith('t.')) {
      const [goal, weight] = raw.split('~');
      targets.push({ name: key.slice(2), goal: Number(goal), weight: Number(weight) });
    }
  }
  return {
    modelId,
    xAxis: q.get('x') ?? '',
    yAxis: q.get('y') ?? '',
    alpha: Number(q.get('alpha') ?? '0.2'),
    method: q.get('method') ?? 'confmc',
    features,
    targets,
  };
}
