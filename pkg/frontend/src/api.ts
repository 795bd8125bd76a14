import type { Answers, ApiError, ExplainResponse, ImportanceEntry, PredictResponse, Schema } from './types.js';

const BASE = '/api/v1';

export class ApiRequestError extends Error {
  constructor(
    public status: number,
    public body: ApiError,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

async function parse<T>(response: Response): Promise<T> {
  const body = await response.json();
  if (!response.ok) {
    throw new ApiRequestError(response.status, body as ApiError);
  }
  return body as T;
}

// The client is single-user but a slider can fire while the previous request
// is still in flight; identical requests are deduplicated by key so each
// distinct payload hits the network once.
const inFlight = new Map<string, Promise<unknown>>();

function dedup<T>(key: string, run: () => Promise<T>): Promise<T> {
  const pending = inFlight.get(key);
  if (pending) {
    return pending as Promise<T>;
  }
  const p = run().finally(() => inFlight.delete(key));
  inFlight.set(key, p);
  return p;
}

export function getSchema(): Promise<Schema> {
  return dedup('schema', async () => parse<Schema>(await fetch(`${BASE}/schema`)));
}

export function predict(answers: Answers): Promise<PredictResponse> {
  const body = JSON.stringify(answers);
  return dedup(`predict:${body}`, async () =>
    parse<PredictResponse>(
      await fetch(`${BASE}/predict`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body,
      }),
    ),
  );
}

export function explain(answers: Answers, disease: string, budget = 512): Promise<ExplainResponse> {
  const body = JSON.stringify(answers);
  return dedup(`explain:${disease}:${budget}:${body}`, async () =>
    parse<ExplainResponse>(
      await fetch(`${BASE}/explain?disease=${encodeURIComponent(disease)}&budget=${budget}`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body,
      }),
    ),
  );
}

export async function importance(disease: string, k = 3): Promise<ImportanceEntry[]> {
  const doc = await parse<{ top: ImportanceEntry[] }>(
    await fetch(`${BASE}/importance/${encodeURIComponent(disease)}?k=${k}`),
  );
  return doc.top;
}
