/** Thin typed client over the service's JSON endpoints. */

import type { ApiErrorBody, GenerateRequest, GenerateResponse } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly field?: string,
  ) {
    super(message);
  }

  get isClientError(): boolean {
    return this.status >= 400 && this.status < 500;
  }
}

async function parseError(resp: Response): Promise<ServiceError> {
  let body: Partial<ApiErrorBody> = {};
  try {
    body = (await resp.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body; fall through to defaults
  }
  return new ServiceError(
    resp.status,
    body.code ?? "http_error",
    body.message ?? `request failed with status ${resp.status}`,
    body.field,
  );
}

/** Surface the UI depends on; ServiceClient is the HTTP implementation. */
export interface SliderService {
  getSliders(): Promise<unknown>;
  generate(request: GenerateRequest): Promise<GenerateResponse>;
}

export class ServiceClient implements SliderService {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async getSliders(): Promise<unknown> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/sliders`);
    if (!resp.ok) throw await parseError(resp);
    return resp.json();
  }

  async generate(request: GenerateRequest): Promise<GenerateResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as GenerateResponse;
  }
}
