// DOM wiring for the design explorer. All numbers displayed or plotted come
// from API responses; this file only moves them between controls, requests,
// and the canvas.

import { ApiError, Client } from './api';
import { pollJob } from './poll';
import {
  AxisBinding,
  bindAxis,
  extentOf,
  intervalRectangle,
  PlotFrame,
  toPixel,
  trajectoryMarkers,
  axisValue,
} from './scatter';
import {
  buildSearchRequest,
  defaultState,
  ExplorerState,
  rangeErrors,
  stateFromQuery,
  stateToQuery,
} from './state';
import type { Interval, ModelDetail, TrajectoryPoint } from './types';

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

let client = new Client(localStorage.getItem('protoforge.baseUrl') ?? 'http://127.0.0.1:8080');
let state: ExplorerState | null = null;
let detail: ModelDetail | null = null;
let scatterPoints: [number, number][] = [];
let trajectory: TrajectoryPoint[] = [];
let finalPoint: number[] | null = null;
let finalIntervals: Interval[] | null = null;
let activeJob: string | null = null;

function pushUrl() {
  if (state) history.replaceState(null, '', `?${stateToQuery(state)}`);
}

async function loadModels() {
  const select = $<HTMLSelectElement>('model-select');
  select.innerHTML = '';
  const models = await client.models();
  for (const m of models) {
    const opt = document.createElement('option');
    opt.value = m.id;
    opt.textContent = `${m.id} (${m.target_names.join(', ')})`;
    select.appendChild(opt);
  }
  if (models.length > 0) {
    const fromUrl = stateFromQuery(location.search);
    const id = fromUrl && models.some((m) => m.id === fromUrl.modelId) ? fromUrl.modelId : models[0].id;
    select.value = id;
    await loadModel(id, fromUrl?.modelId === id ? fromUrl : null);
  }
}

async function loadModel(id: string, restored: ExplorerState | null) {
  detail = await client.model(id);
  state = restored ?? defaultState(detail);
  trajectory = [];
  finalPoint = null;
  finalIntervals = null;
  renderAxisPickers();
  renderControls();
  await refreshScatter();
  pushUrl();
}

function renderAxisPickers() {
  if (!detail || !state) return;
  for (const [id, current] of [
    ['x-axis', state.xAxis],
    ['y-axis', state.yAxis],
  ] as const) {
    const sel = $<HTMLSelectElement>(id);
    sel.innerHTML = '';
    for (const name of [...detail.feature_names, ...detail.target_names]) {
      const opt = document.createElement('option');
      opt.value = name;
      opt.textContent = name;
      sel.appendChild(opt);
    }
    sel.value = current;
  }
}

function numberInput(value: number, onChange: (v: number) => void): HTMLInputElement {
  const input = document.createElement('input');
  input.type = 'number';
  input.step = 'any';
  input.value = String(value);
  input.addEventListener('change', () => {
    const v = Number(input.value);
    if (Number.isFinite(v)) onChange(v);
    pushUrl();
    renderControlErrors();
  });
  return input;
}

function renderControls() {
  if (!state) return;
  const featBox = $<HTMLDivElement>('feature-controls');
  featBox.innerHTML = '';
  for (const f of state.features) {
    const row = document.createElement('div');
    row.className = 'control-row';
    row.dataset.feature = f.name;
    const label = document.createElement('label');
    const fixed = document.createElement('input');
    fixed.type = 'checkbox';
    fixed.checked = f.fixed;
    fixed.addEventListener('change', () => {
      f.fixed = fixed.checked;
      value.disabled = !f.fixed;
      lo.disabled = f.fixed;
      hi.disabled = f.fixed;
      pushUrl();
    });
    label.append(fixed, ` ${f.name} fixed`);
    const value = numberInput(f.value, (v) => (f.value = v));
    value.title = 'value when fixed';
    value.disabled = !f.fixed;
    const lo = numberInput(f.lo, (v) => (f.lo = v));
    lo.title = 'lower bound';
    lo.disabled = f.fixed;
    const hi = numberInput(f.hi, (v) => (f.hi = v));
    hi.title = 'upper bound';
    hi.disabled = f.fixed;
    const err = document.createElement('span');
    err.className = 'range-error';
    row.append(label, value, lo, hi, err);
    featBox.appendChild(row);
  }
  const targBox = $<HTMLDivElement>('target-controls');
  targBox.innerHTML = '';
  state.targets.forEach((t, i) => {
    const row = document.createElement('div');
    row.className = 'control-row';
    const label = document.createElement('span');
    label.textContent = `${t.name} goal / weight`;
    const goal = numberInput(t.goal, (v) => (t.goal = v));
    const weight = numberInput(t.weight, (v) => (t.weight = v));
    weight.disabled = i === 0; // first weight pinned to 1 by the service
    row.append(label, goal, weight);
    targBox.appendChild(row);
  });
  const alpha = $<HTMLInputElement>('coverage');
  alpha.value = String(Math.round((1 - state.alpha) * 100));
  $<HTMLSpanElement>('coverage-label').textContent = `${alpha.value}%`;
}

function renderControlErrors() {
  if (!state) return;
  const errors = rangeErrors(state);
  for (const row of document.querySelectorAll<HTMLDivElement>('#feature-controls .control-row')) {
    const name = row.dataset.feature!;
    const span = row.querySelector<HTMLSpanElement>('.range-error')!;
    span.textContent = errors.get(name) ?? '';
  }
}

// Surface a 422 from the service inline on the offending range control.
function surfaceSearchError(err: unknown) {
  const message = err instanceof ApiError ? String(err.detail) : String(err);
  if (err instanceof ApiError && err.status === 422 && state) {
    for (const f of state.features) {
      if (f.lo > f.hi) {
        const row = document.querySelector<HTMLDivElement>(
          `#feature-controls .control-row[data-feature="${f.name}"] .range-error`,
        );
        if (row) row.textContent = message;
      }
    }
  }
  $<HTMLSpanElement>('status').textContent = message;
}

async function refreshScatter() {
  if (!state) return;
  try {
    const res = await client.scatter(state.modelId, state.xAxis, state.yAxis);
    scatterPoints = res.points;
  } catch {
    scatterPoints = [];
  }
  draw();
}

function draw() {
  if (!state || !detail) return;
  const canvas = $<HTMLCanvasElement>('plot');
  const ctx = canvas.getContext('2d')!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  let xB: AxisBinding, yB: AxisBinding;
  try {
    xB = bindAxis(detail, state.xAxis);
    yB = bindAxis(detail, state.yAxis);
  } catch {
    return;
  }
  const trajXY = trajectory
    .map((p) => [axisValue(xB, p.x, p.y ?? null), axisValue(yB, p.x, p.y ?? null)] as const)
    .filter((p): p is [number, number] => p[0] !== null && p[1] !== null);
  const rect =
    finalPoint && finalIntervals && trajectory.length > 0
      ? intervalRectangle(xB, yB, trajectory[trajectory.length - 1].x, finalPoint, finalIntervals)
      : null;
  const xs = [
    ...scatterPoints.map((p) => p[0]),
    ...trajXY.map((p) => p[0]),
    ...(rect ? [rect.x0, rect.x1] : []),
  ];
  const ys = [
    ...scatterPoints.map((p) => p[1]),
    ...trajXY.map((p) => p[1]),
    ...(rect ? [rect.y0, rect.y1] : []),
  ];
  const frame: PlotFrame = {
    width: canvas.width,
    height: canvas.height,
    xExtent: extentOf(xs),
    yExtent: extentOf(ys),
  };
  ctx.fillStyle = '#3b6fd4';
  for (const [x, y] of scatterPoints) {
    const [px, py] = toPixel(frame, x, y);
    ctx.beginPath();
    ctx.arc(px, py, 2.5, 0, Math.PI * 2);
    ctx.fill();
  }
  if (trajXY.length > 1) {
    ctx.strokeStyle = '#555';
    ctx.beginPath();
    trajXY.forEach(([x, y], i) => {
      const [px, py] = toPixel(frame, x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
  if (rect) {
    const [rx0, ry0] = toPixel(frame, rect.x0, rect.y0);
    const [rx1, ry1] = toPixel(frame, rect.x1, rect.y1);
    ctx.strokeStyle = '#d43b3b';
    ctx.lineWidth = 1.5;
    ctx.strokeRect(Math.min(rx0, rx1), Math.min(ry0, ry1), Math.abs(rx1 - rx0) || 2, Math.abs(ry1 - ry0) || 2);
    ctx.lineWidth = 1;
  }
  const markers = trajectoryMarkers(xB, yB, trajectory, {
    first: trajectory[0]?.y ?? null,
    last: trajectory[trajectory.length - 1]?.y ?? null,
  });
  if (markers.start) {
    const [px, py] = toPixel(frame, markers.start[0], markers.start[1]);
    ctx.fillStyle = '#2a9d3c';
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, Math.PI * 2);
    ctx.fill();
  }
  if (markers.end) {
    const [px, py] = toPixel(frame, markers.end[0], markers.end[1]);
    ctx.fillStyle = '#d43b3b';
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, Math.PI * 2);
    ctx.fill();
  }
  $<HTMLSpanElement>('x-label').textContent = state.xAxis;
  $<HTMLSpanElement>('y-label').textContent = state.yAxis;
}

function renderPrototypeTable() {
  if (!state || trajectory.length === 0) return;
  const table = $<HTMLTableElement>('prototype-table');
  table.innerHTML = '';
  const last = trajectory[trajectory.length - 1];
  state.features.forEach((f, i) => {
    const tr = table.insertRow();
    tr.insertCell().textContent = f.name;
    tr.insertCell().textContent = String(last.x[i]);
  });
  if (finalPoint && finalIntervals) {
    state.targets.forEach((t, i) => {
      const tr = table.insertRow();
      const iv = finalIntervals![i];
      tr.insertCell().textContent = `${t.name} (predicted)`;
      const bounds =
        iv && iv.lower !== null && iv.upper !== null
          ? ` [${iv.lower.toFixed(4)}, ${iv.upper.toFixed(4)}]`
          : ' [unbounded]';
      tr.insertCell().textContent = finalPoint![i].toFixed(4) + bounds;
    });
  }
}

async function runSearch() {
  if (!state) return;
  renderControlErrors();
  if (rangeErrors(state).size > 0) return;
  const button = $<HTMLButtonElement>('run-search');
  const cancel = $<HTMLButtonElement>('cancel-search');
  button.disabled = true;
  cancel.disabled = false;
  trajectory = [];
  finalPoint = null;
  finalIntervals = null;
  $<HTMLSpanElement>('status').textContent = 'submitting...';
  try {
    const { job_id } = await client.search(state.modelId, buildSearchRequest(state));
    activeJob = job_id;
    const outcome = await pollJob(client, job_id, (u) => {
      trajectory = u.trajectory;
      $<HTMLSpanElement>('status').textContent =
        `${u.status} restart ${u.restart} iteration ${u.iteration}`;
      draw();
    });
    if (outcome.status === 'done') {
      trajectory = outcome.result?.trajectory ?? outcome.trajectory;
      finalPoint = outcome.point;
      finalIntervals = outcome.intervals;
      $<HTMLSpanElement>('status').textContent =
        `done: loss ${outcome.result?.loss_final.toFixed(5)}`;
    } else {
      $<HTMLSpanElement>('status').textContent = `failed: ${outcome.error}`;
    }
    draw();
    renderPrototypeTable();
  } catch (err) {
    surfaceSearchError(err);
  } finally {
    activeJob = null;
    button.disabled = false;
    cancel.disabled = true;
  }
}

async function repredict() {
  // refresh the rectangle at the current final prototype for a new alpha
  if (!state || trajectory.length === 0) return;
  const last = trajectory[trajectory.length - 1];
  try {
    const res = await client.predict(state.modelId, last.x, state.alpha, state.method);
    finalPoint = res.point;
    finalIntervals = res.intervals;
    draw();
    renderPrototypeTable();
  } catch (err) {
    surfaceSearchError(err);
  }
}

function wire() {
  const base = $<HTMLInputElement>('base-url');
  base.value = client.baseUrl;
  base.addEventListener('change', () => {
    client = new Client(base.value.replace(/\/$/, ''));
    localStorage.setItem('protoforge.baseUrl', client.baseUrl);
    loadModels().catch((e) => surfaceSearchError(e));
  });
  $<HTMLSelectElement>('model-select').addEventListener('change', (e) => {
    loadModel((e.target as HTMLSelectElement).value, null).catch((err) => surfaceSearchError(err));
  });
  for (const id of ['x-axis', 'y-axis'] as const) {
    $<HTMLSelectElement>(id).addEventListener('change', (e) => {
      if (!state) return;
      const v = (e.target as HTMLSelectElement).value;
      if (id === 'x-axis') state.xAxis = v;
      else state.yAxis = v;
      pushUrl();
      refreshScatter();
    });
  }
  $<HTMLInputElement>('coverage').addEventListener('change', (e) => {
    if (!state) return;
    const coverage = Number((e.target as HTMLInputElement).value);
    state.alpha = Number(((100 - coverage) / 100).toFixed(6));
    $<HTMLSpanElement>('coverage-label').textContent = `${coverage}%`;
    pushUrl();
    repredict();
  });
  $<HTMLButtonElement>('run-search').addEventListener('click', () => runSearch());
  $<HTMLButtonElement>('cancel-search').addEventListener('click', () => {
    if (activeJob) client.cancelJob(activeJob).catch(() => undefined);
  });
  window.addEventListener('beforeunload', () => {
    if (activeJob) client.cancelJob(activeJob).catch(() => undefined);
  });
  loadModels().catch((e) => surfaceSearchError(e));
}

wire();
