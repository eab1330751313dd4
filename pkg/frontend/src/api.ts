/** Thin fetch client for the local diagnosis service. */

import type { Diagnosis, HistoryPage, ModelsResponse, RecommendationEntry } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Human messages for the errors the service is specified to return. */
function describeError(status: number, detail: string): string {
  switch (status) {
    case 400:
      return "That file could not be read as a photo (PNG or JPEG expected).";
    case 404:
      return "Not found.";
    case 413:
      return "Image too large for the service upload limit.";
    default:
      return detail || `Service error (${status}).`;
  }
}

async function parseJson(response: Response): Promise<unknown> {
  try {
    return await response.json();
  } catch {
    return {};
  }
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.base + path, init);
    const body = (await parseJson(response)) as Record<string, unknown>;
    if (!response.ok) {
      const detail = typeof body.error === "string" ? body.error : "";
      throw new ApiError(response.status, describeError(response.status, detail));
    }
    return body as T;
  }

  /** Uploads the image body directly; the service resizes as needed. */
  diagnose(image: Blob, contentType = "image/png"): Promise<Diagnosis> {
    return this.request<Diagnosis>("/api/diagnose", {
      method: "POST",
      headers: { "Content-Type": contentType },
      body: image,
    });
  }

  history(limit = 20, before?: string | null): Promise<HistoryPage> {
    const query = new URLSearchParams({ limit: String(limit) });
    if (before) query.set("before", before);
    return this.request<HistoryPage>(`/api/history?${query}`);
  }

  historyItem(id: string): Promise<Diagnosis> {
    return this.request<Diagnosis>(`/api/history/${encodeURIComponent(id)}`);
  }

  recommendation(label: string): Promise<RecommendationEntry> {
    return this.request<RecommendationEntry>(`/api/recommendations/${encodeURIComponent(label)}`);
  }

  models(): Promise<ModelsResponse> {
    return this.request<ModelsResponse>("/api/models");
  }

  async healthy(): Promise<boolean> {
    try {
      const body = await this.request<{ status: string }>("/api/health");
      return body.status === "ok";
    } catch {
      return false;
    }
  }
}
