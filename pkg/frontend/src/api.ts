/**
 * Thin client over the warehouse JSON API.
 *
 * Every number shown in the UI originates from these payloads; nothing is
 * aggregated client-side. Rapid successive queries cancel the in-flight one.
 */

import type { Catalog, CellSet, QuerySpec, ReportResult, AccessLogEntry } from "./types.js";

export class ApiError extends Error {
  constructor(public code: string, message: string, public status: number) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  actor = "anonymous";
  private inflightQuery: AbortController | null = null;

  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private headers(): Record<string, string> {
    return { "Content-Type": "application/json", "X-Actor": this.actor || "anonymous" };
  }

  private async parse<T>(response: Response): Promise<T> {
    const body = await response.json();
    if (!response.ok) {
      const code = typeof body?.code === "string" ? body.code : "HttpError";
      const message = typeof body?.message === "string" ? body.message : response.statusText;
      throw new ApiError(code, message, response.status);
    }
    return body as T;
  }

  async catalog(): Promise<Catalog> {
    const response = await this.fetchFn(`${this.baseUrl}/api/catalog`, {
      headers: this.headers(),
    });
    return this.parse<Catalog>(response);
  }

  /** Runs a query, aborting any still-running previous query. */
  async query(spec: QuerySpec): Promise<CellSet> {
    this.inflightQuery?.abort();
    const controller = typeof AbortController !== "undefined" ? new AbortController() : null;
    this.inflightQuery = controller;
    try {
      const response = await this.fetchFn(`${this.baseUrl}/api/query`, {
        method: "POST",
        headers: this.headers(),
        body: JSON.stringify(spec),
        signal: controller?.signal ?? undefined,
      });
      return await this.parse<CellSet>(response);
    } finally {
      if (this.inflightQuery === controller) this.inflightQuery = null;
    }
  }

  async drill(
    spec: QuerySpec,
    axis: "rows" | "columns",
    memberPath: (string | number)[],
    dimension?: string,
  ): Promise<QuerySpec> {
    const body: Record<string, unknown> = { spec, axis, member_path: memberPath };
    if (dimension) body.dimension = dimension;
    const response = await this.fetchFn(`${this.baseUrl}/api/drill`, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify(body),
    });
    return this.parse<QuerySpec>(response);
  }

  async report(reportId: string, params: Record<string, string>): Promise<ReportResult> {
    const search = new URLSearchParams(params).toString();
    const response = await this.fetchFn(
      `${this.baseUrl}/api/reports/${reportId}?${search}`,
      { headers: this.headers() },
    );
    return this.parse<ReportResult>(response);
  }

  async accessLog(params: Record<string, string> = {}): Promise<AccessLogEntry[]> {
    const search = new URLSearchParams(params).toString();
    const response = await this.fetchFn(
      `${this.baseUrl}/api/access-log${search ? `?${search}` : ""}`,
      { headers: this.headers() },
    );
    const body = await this.parse<{ entries: AccessLogEntry[] }>(response);
    return body.entries;
  }
}
