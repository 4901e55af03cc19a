/**
 * Typed client for the subjective test service.
 *
 * The service keeps conditions server-side: the client only ever sees
 * opaque media tokens, so nothing here can reveal whether a clip is an
 * original or a model output.
 */

export interface SessionInfo {
  session_id: string;
  playlist_length: number;
}

export type NextItem =
  | { status: "item"; index: number; video_id: string; media_token: string; total: number }
  | { status: "done"; total: number };

export interface RatingAck {
  ok: boolean;
  done: boolean;
}

export interface CreateSessionRequest {
  participant: string;
  video_ids?: string[];
  conditions?: string[];
  seed?: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  async createSession(request: CreateSessionRequest): Promise<SessionInfo> {
    return this.send("POST", "/api/sessions", request);
  }

  async nextItem(sessionId: string): Promise<NextItem> {
    return this.send("GET", `/api/sessions/${sessionId}/next`);
  }

  async submitRating(sessionId: string, index: number, rating: number): Promise<RatingAck> {
    return this.send("POST", `/api/sessions/${sessionId}/ratings`, { index, rating });
  }

  mediaUrl(token: string): string {
    return `${this.baseUrl}/api/media/${token}`;
  }

  private async send<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = await response.json();
        if (payload && typeof payload.detail === "string") detail = payload.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response.json() as Promise<T>;
  }
}
