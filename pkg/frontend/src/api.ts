import {
  ApiError,
  FitResponse,
  ModelDoc,
  ModelSummary,
  SessionState,
  SliderResponse,
  WishInput,
} from "./types.js";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin JSON client for the troubleshooter service.
 *
 * Every number the UI ever displays comes back through here; the client does
 * no probability arithmetic of its own.
 */
export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.base + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(
        response.status,
        (payload as { error?: string }).error ?? `http-${response.status}`,
        (payload as { message?: string }).message ?? response.statusText,
      );
    }
    return payload as T;
  }

  listModels(): Promise<{ models: ModelSummary[] }> {
    return this.request("GET", "/api/models");
  }

  getModel(modelId: string): Promise<ModelDoc> {
    return this.request("GET", `/api/models/${encodeURIComponent(modelId)}`);
  }

  uploadModel(document: unknown): Promise<{ model_id: string }> {
    return this.request("POST", "/api/models", document);
  }

  createSession(modelId: string, profile?: string): Promise<SessionState> {
    return this.request("POST", "/api/sessions", { model_id: modelId, profile });
  }

  getSession(sessionId: string): Promise<SessionState> {
    return this.request("GET", `/api/sessions/${encodeURIComponent(sessionId)}`);
  }

  postOutcome(
    sessionId: string,
    seq: number,
    stepId: string,
    outcome: string,
  ): Promise<SessionState> {
    return this.request("POST", `/api/sessions/${encodeURIComponent(sessionId)}/outcome`, {
      seq,
      step_id: stepId,
      outcome,
    });
  }

  postUndo(sessionId: string, seq: number): Promise<SessionState> {
    return this.request("POST", `/api/sessions/${encodeURIComponent(sessionId)}/undo`, {
      seq,
    });
  }

  postSlider(
    modelId: string,
    questionId: string,
    cause: string,
    answer: string,
    value: number,
  ): Promise<SliderResponse> {
    return this.request(
      "POST",
      `/api/models/${encodeURIComponent(modelId)}/questions/${encodeURIComponent(questionId)}/slider`,
      { cause, answer, value },
    );
  }

  postFit(modelId: string, questionId: string, wishes: WishInput[]): Promise<FitResponse> {
    return this.request(
      "POST",
      `/api/models/${encodeURIComponent(modelId)}/questions/${encodeURIComponent(questionId)}/fit`,
      { wishes },
    );
  }
}
