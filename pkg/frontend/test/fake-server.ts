/**
 * In-memory stand-in for the rating service, speaking the same five
 * endpoints with the same status-code semantics. Conditions exist only
 * here, never in any payload, mirroring the real service's blinding.
 */

interface PlaylistEntry {
  videoId: string;
  condition: string; // server-side only
  token: string;
}

export interface RecordedRating {
  index: number;
  rating: number;
}

export class FakeServer {
  playlist: PlaylistEntry[];
  cursor = 0;
  ratings: RecordedRating[] = [];
  sessionsCreated = 0;
  nextCalls = 0;
  mediaCalls = 0;
  readonly sessionId = "f2e9c4a1b7d65038";

  constructor(items: Array<[string, string]>) {
    this.playlist = items.map(([videoId, condition], i) => ({
      videoId,
      condition,
      token: `tok${i.toString(16).padStart(30, "0")}`,
    }));
  }

  handle(method: string, url: string, body: any): { status: number; payload: unknown } {
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    if (method === "POST" && path === "/api/sessions") {
      this.sessionsCreated += 1;
      return {
        status: 200,
        payload: { session_id: this.sessionId, playlist_length: this.playlist.length },
      };
    }
    const nextMatch = path.match(/^\/api\/sessions\/([^/]+)\/next$/);
    if (method === "GET" && nextMatch) {
      this.nextCalls += 1;
      if (nextMatch[1] !== this.sessionId) {
        return { status: 404, payload: { detail: "unknown session" } };
      }
      if (this.cursor >= this.playlist.length) {
        return { status: 200, payload: { status: "done", total: this.playlist.length } };
      }
      const entry = this.playlist[this.cursor];
      return {
        status: 200,
        payload: {
          status: "item",
          index: this.cursor,
          video_id: entry.videoId,
          media_token: entry.token,
          total: this.playlist.length,
        },
      };
    }
    const rateMatch = path.match(/^\/api\/sessions\/([^/]+)\/ratings$/);
    if (method === "POST" && rateMatch) {
      if (rateMatch[1] !== this.sessionId) {
        return { status: 404, payload: { detail: "unknown session" } };
      }
      if (this.cursor >= this.playlist.length) {
        return { status: 409, payload: { detail: "session is already complete" } };
      }
      if (typeof body.rating !== "number" || body.rating < 1 || body.rating > 5) {
        return { status: 400, payload: { detail: "rating must be 1..5" } };
      }
      if (body.index !== this.cursor) {
        return {
          status: 409,
          payload: { detail: `expected a rating for item ${this.cursor}` },
        };
      }
      this.ratings.push({ index: body.index, rating: body.rating });
      this.cursor += 1;
      return {
        status: 200,
        payload: { ok: true, done: this.cursor >= this.playlist.length },
      };
    }
    if (method === "GET" && path.startsWith("/api/media/")) {
      this.mediaCalls += 1;
      return { status: 200, payload: {} };
    }
    return { status: 404, payload: { detail: `no route ${method} ${path}` } };
  }

  /** Route global fetch into this server. Returns a restore function. */
  install(): () => void {
    const original = globalThis.fetch;
    globalThis.fetch = (async (input: any, init?: any) => {
      const url = typeof input === "string" ? input : input.url;
      const method = init?.method ?? "GET";
      const body = init?.body ? JSON.parse(init.body) : undefined;
      const { status, payload } = this.handle(method, url, body);
      return new Response(JSON.stringify(payload), {
        status,
        headers: { "Content-Type": "application/json" },
      });
    }) as typeof fetch;
    return () => {
      globalThis.fetch = original;
    };
  }
}
