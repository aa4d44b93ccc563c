import { describe, expect, it } from 'vitest';

import {
  bindAxis,
  extentOf,
  intervalRectangle,
  toPixel,
  trajectoryMarkers,
} from '../src/scatter';
import type { ModelDetail } from '../src/types';

const twoTarget: ModelDetail = {
  id: 'm',
  feature_names: ['grit', 'binder'],
  target_names: ['speed', 'lifetime'],
  feature_ranges: [
    [0, 1],
    [0, 1],
  ],
  target_ranges: [
    [0, 10],
    [0, 100],
  ],
  n_train: 10,
  n_cal: 5,
  calibrations: [],
};

describe('axis binding', () => {
  it('resolves features and targets', () => {
    expect(bindAxis(twoTarget, 'grit')).toEqual({ name: 'grit', kind: 'feature', index: 0 });
    expect(bindAxis(twoTarget, 'lifetime')).toEqual({ name: 'lifetime', kind: 'target', index: 1 });
    expect(() => bindAxis(twoTarget, 'nope')).toThrow(/unknown axis/);
  });
});

describe('extent and pixel mapping', () => {
  it('pads extents and handles constants', () => {
    const e = extentOf([1, 1]);
    expect(e.min).toBeLessThan(1);
    expect(e.max).toBeGreaterThan(1);
  });

  it('maps corners with y flipped', () => {
    const frame = {
      width: 100,
      height: 50,
      xExtent: { min: 0, max: 10 },
      yExtent: { min: 0, max: 5 },
    };
    expect(toPixel(frame, 0, 0)).toEqual([0, 50]);
    expect(toPixel(frame, 10, 5)).toEqual([100, 0]);
    expect(toPixel(frame, 5, 2.5)).toEqual([50, 25]);
  });
});

describe('interval rectangle', () => {
  const xB = bindAxis(twoTarget, 'speed');
  const yB = bindAxis(twoTarget, 'lifetime');

  it('spans per-axis intervals when both axes are targets', () => {
    const rect = intervalRectangle(xB, yB, [0.5, 0.5], [4, 40], [
      { lower: 3, upper: 5 },
      { lower: 30, upper: 55 },
    ]);
    expect(rect).toEqual({ x0: 3, x1: 5, y0: 30, y1: 55 });
  });

  it('degenerates to the final coordinate on feature axes', () => {
    const fB = bindAxis(twoTarget, 'binder');
    const rect = intervalRectangle(fB, yB, [0.5, 0.25], [4, 40], [
      { lower: 3, upper: 5 },
      { lower: 30, upper: 55 },
    ]);
    expect(rect).toEqual({ x0: 0.25, x1: 0.25, y0: 30, y1: 55 });
  });

  it('returns null for unbounded intervals', () => {
    const rect = intervalRectangle(xB, yB, [0.5, 0.5], [4, 40], [
      { lower: null, upper: null, unbounded: true },
      { lower: 30, upper: 55 },
    ]);
    expect(rect).toBeNull();
  });
});

describe('trajectory markers', () => {
  const xB = bindAxis(twoTarget, 'grit');
  const yB = bindAxis(twoTarget, 'speed');

  it('empty trajectory renders no markers', () => {
    expect(trajectoryMarkers(xB, yB, [], { first: null, last: null })).toEqual({
      start: null,
      end: null,
    });
  });

  it('single-point trajectory makes start and end coincide', () => {
    const markers = trajectoryMarkers(
      xB,
      yB,
      [{ x: [0.3, 0.7], y: [4.5, 90], loss: 1 }],
      { first: [4.5, 90], last: [4.5, 90] },
    );
    expect(markers.start).toEqual(markers.end);
    expect(markers.start).toEqual([0.3, 4.5]);
  });

  it('start and end read from the trajectory endpoints', () => {
    const markers = trajectoryMarkers(
      xB,
      yB,
      [
        { x: [0.1, 0.2], y: [1, 10], loss: 3 },
        { x: [0.4, 0.2], y: [2, 20], loss: 2 },
        { x: [0.8, 0.2], y: [6, 60], loss: 1 },
      ],
      { first: [1, 10], last: [6, 60] },
    );
    expect(markers.start).toEqual([0.1, 1]);
    expect(markers.end).toEqual([0.8, 6]);
  });
});
