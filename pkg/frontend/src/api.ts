// Thin typed client for the service. The base URL is the single piece of
// configuration the explorer needs.

import type {
  JobStatus,
  ModelDetail,
  ModelSummary,
  PredictResponse,
  ScatterResponse,
  SearchRequest,
} from './types';

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(typeof detail === 'string' ? detail : JSON.stringify(detail));
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Client {
  constructor(
    public baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      headers: { 'content-type': 'application/json' },
      ...init,
    });
    const body = await res.json().catch(() => null);
    if (!res.ok) {
      throw new ApiError(res.status, body?.detail ?? res.statusText);
    }
    return body as T;
  }

  health(): Promise<{ status: string }> {
    return this.request('/health');
  }

  models(): Promise<ModelSummary[]> {
    return this.request('/models');
  }

  model(id: string): Promise<ModelDetail> {
    return this.request(`/models/${id}`);
  }

  scatter(id: string, x: string, y: string): Promise<ScatterResponse> {
    const q = new URLSearchParams({ x, y });
    return this.request(`/models/${id}/scatter?${q}`);
  }

  predict(id: string, x: number[], alpha: number, method: string): Promise<PredictResponse> {
    return this.request(`/models/${id}/predict`, {
      method: 'POST',
      body: JSON.stringify({ x, alpha, method }),
    });
  }

  search(id: string, spec: SearchRequest): Promise<{ job_id: string }> {
    return this.request(`/models/${id}/search`, {
      method: 'POST',
      body: JSON.stringify(spec),
    });
  }

  job(jobId: string, trajectoryFrom = 0): Promise<JobStatus> {
    return this.request(`/jobs/${jobId}?trajectory_from=${trajectoryFrom}`);
  }

  cancelJob(jobId: string): Promise<JobStatus> {
    return this.request(`/jobs/${jobId}`, { method: 'DELETE' });
  }
}
