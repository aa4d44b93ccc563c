// Plot geometry, kept free of DOM so it is testable: axis extents, world to
// pixel mapping, marker positions, and the prediction-interval rectangle.
// Blue dots are tested products, green the search start, red the search end,
// and the red rectangle spans the per-axis prediction intervals at the end
// point. Every number comes from an API response.

import type { Interval, ModelDetail, TrajectoryPoint } from './types';

export type Extent = { min: number; max: number };

export type PlotFrame = {
  width: number;
  height: number;
  xExtent: Extent;
  yExtent: Extent;
};

export type AxisBinding = {
  name: string;
  kind: 'feature' | 'target';
  index: number; // into the model's feature or target list
};

export function bindAxis(detail: ModelDetail, name: string): AxisBinding {
  const fi = detail.feature_names.indexOf(name);
  if (fi >= 0) return { name, kind: 'feature', index: fi };
  const ti = detail.target_names.indexOf(name);
  if (ti >= 0) return { name, kind: 'target', index: ti };
  throw new Error(`unknown axis ${name}`);
}

export function extentOf(values: number[], padFraction = 0.05): Extent {
  if (values.length === 0) return { min: 0, max: 1 };
  let min = Math.min(...values);
  let max = Math.max(...values);
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  const pad = (max - min) * padFraction;
  return { min: min - pad, max: max + pad };
}

export function toPixel(frame: PlotFrame, x: number, y: number): [number, number] {
  const px = ((x - frame.xExtent.min) / (frame.xExtent.max - frame.xExtent.min)) * frame.width;
  const py =
    frame.height -
    ((y - frame.yExtent.min) / (frame.yExtent.max - frame.yExtent.min)) * frame.height;
  return [px, py];
}

// Coordinate of one trajectory/prototype point along a bound axis: feature
// axes read the feature value; target axes read the model's prediction.
export function axisValue(
  binding: AxisBinding,
  x: number[],
  prediction: number[] | null,
): number | null {
  if (binding.kind === 'feature') return x[binding.index];
  return prediction ? prediction[binding.index] : null;
}

export type RectangleSpec = {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
};

// The interval rectangle at the final prototype: target axes span
// [lower, upper] from the predict response; a feature axis carries no
// interval, so the rectangle degenerates to the final coordinate there.
export function intervalRectangle(
  xBinding: AxisBinding,
  yBinding: AxisBinding,
  xFinal: number[],
  point: number[],
  intervals: Interval[],
): RectangleSpec | null {
  const side = (b: AxisBinding): [number, number] | null => {
    if (b.kind === 'feature') {
      const v = xFinal[b.index];
      return [v, v];
    }
    const iv = intervals[b.index];
    if (!iv || iv.lower === null || iv.upper === null) return null;
    return [iv.lower, iv.upper];
  };
  const xs = side(xBinding);
  const ys = side(yBinding);
  if (!xs || !ys) return null;
  return { x0: xs[0], x1: xs[1], y0: ys[0], y1: ys[1] };
}

export type Markers = {
  start: [number, number] | null;
  end: [number, number] | null;
};

export function trajectoryMarkers(
  xBinding: AxisBinding,
  yBinding: AxisBinding,
  trajectory: TrajectoryPoint[],
  predictions: { first: number[] | null; last: number[] | null },
): Markers {
  if (trajectory.length === 0) return { start: null, end: null };
  const first = trajectory[0];
  const last = trajectory[trajectory.length - 1];
  const sx = axisValue(xBinding, first.x, predictions.first);
  const sy = axisValue(yBinding, first.x, predictions.first);
  const ex = axisValue(xBinding, last.x, predictions.last);
  const ey = axisValue(yBinding, last.x, predictions.last);
  return {
    start: sx !== null && sy !== null ? [sx, sy] : null,
    end: ex !== null && ey !== null ? [ex, ey] : null,
  };
}
