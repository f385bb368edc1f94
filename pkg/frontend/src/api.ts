/** Thin client for the job service; all endpoints it exposes, nothing else. */

import type { EditOpDoc, JobDoc, JobResultDoc, SceneGraphDoc, SessionState } from './types.js';

export class ApiError extends Error {
  status: number;
  path: string | undefined;

  constructor(status: number, message: string, path?: string) {
    super(message);
    this.status = status;
    this.path = path;
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let message = `${resp.status} ${resp.statusText}`;
  let path: string | undefined;
  try {
    const body = await resp.json();
    message = body.error ?? body.detail ?? message;
    path = body.path;
  } catch {
    // not JSON; keep the status line
  }
  return new ApiError(resp.status, String(message), path);
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) throw await parseError(resp);
  return (await resp.json()) as T;
}

export class Client {
  constructor(private base: string = '') {}

  async health(): Promise<{ status: string; version: string }> {
    return asJson(await fetch(`${this.base}/health`));
  }

  async createSession(image: Blob, graph: SceneGraphDoc): Promise<string> {
    const form = new FormData();
    form.append('image', image, 'image.png');
    form.append('graph', JSON.stringify(graph));
    const doc = await asJson<{ session_id: string }>(
      await fetch(`${this.base}/sessions`, { method: 'POST', body: form }),
    );
    return doc.session_id;
  }

  async session(sessionId: string): Promise<SessionState> {
    return asJson(await fetch(`${this.base}/sessions/${sessionId}`));
  }

  async postOp(sessionId: string, op: EditOpDoc): Promise<SceneGraphDoc> {
    const doc = await asJson<{ graph: SceneGraphDoc }>(
      await fetch(`${this.base}/sessions/${sessionId}/ops`, {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify(op),
      }),
    );
    return doc.graph;
  }

  async submitJob(sessionId: string, spec: object): Promise<string> {
    const doc = await asJson<{ job_id: string }>(
      await fetch(`${this.base}/sessions/${sessionId}/jobs`, {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify(spec),
      }),
    );
    return doc.job_id;
  }

  async job(jobId: string): Promise<JobDoc> {
    return asJson(await fetch(`${this.base}/jobs/${jobId}`));
  }

  async jobResult(jobId: string): Promise<JobResultDoc> {
    return asJson(await fetch(`${this.base}/jobs/${jobId}/result`));
  }

  stepImageUrl(jobId: string, step: number): string {
    return `${this.base}/jobs/${jobId}/steps/${step}`;
  }
}
