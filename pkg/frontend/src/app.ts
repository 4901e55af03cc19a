/**
 * Rating client: instruction screen, full-HD blind playback, forced-choice
 * rating modal, end screen. All session ordering is server-authoritative;
 * the client just follows the cursor, which also makes page reloads resume
 * cleanly mid-session.
 */

import { ApiClient, ApiError, NextItem } from "./api.js";
import {
  UiSessionState,
  backToSetup,
  initialState,
  itemReceived,
  mediaFailed,
  playbackEnded,
  playbackStarted,
  ratingRejected,
  sessionCreated,
  sessionFinished,
} from "./state.js";

export const RATING_LABELS: ReadonlyArray<readonly [number, string]> = [
  [1, "Bad"],
  [2, "Poor"],
  [3, "Fair"],
  [4, "Good"],
  [5, "Excellent"],
];

export const STAGE_WIDTH = 1920;
export const STAGE_HEIGHT = 1080;

const STORAGE_KEY = "movidnn.session";

export class App {
  state: UiSessionState = initialState;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private storage: Storage = window.sessionStorage,
  ) {}

  /** Entry point: resume a stored session at the server cursor, else setup. */
  async init(): Promise<void> {
    const stored = this.storage.getItem(STORAGE_KEY);
    if (stored) {
      try {
        const next = await this.api.nextItem(stored);
        this.state = { ...initialState, phase: "instruction", sessionId: stored };
        this.applyNext(next);
        return;
      } catch {
        this.storage.removeItem(STORAGE_KEY); // stale or unknown session
      }
    }
    this.state = initialState;
    this.render();
  }

  // --- event handlers -------------------------------------------------

  private async createSession(): Promise<void> {
    const participant =
      (this.root.querySelector("#participant") as HTMLInputElement).value.trim() || "anonymous";
    const videos = this.readList("#videos");
    const conditions = this.readList("#conditions");
    try {
      const info = await this.api.createSession({
        participant,
        ...(videos.length ? { video_ids: videos } : {}),
        ...(conditions.length ? { conditions } : {}),
      });
      this.storage.setItem(STORAGE_KEY, info.session_id);
      this.state = sessionCreated(this.state, info.session_id, info.playlist_length);
    } catch (error) {
      this.state = { ...this.state, notice: describe(error) };
    }
    this.render();
  }

  /** START: the first media/next request happens here, not before. */
  private async start(): Promise<void> {
    await this.advance();
  }

  private async advance(): Promise<void> {
    try {
      const next = await this.api.nextItem(this.state.sessionId!);
      this.applyNext(next);
    } catch (error) {
      this.state = { ...this.state, notice: describe(error) };
      this.render();
    }
  }

  private applyNext(next: NextItem): void {
    if (next.status === "done") {
      this.state = sessionFinished(this.state);
    } else {
      this.state = itemReceived(
        this.state,
        { index: next.index, videoId: next.video_id, mediaToken: next.media_token },
        next.total,
      );
    }
    this.render();
  }

  private beginPlayback(): void {
    this.state = playbackStarted(this.state);
    this.render();
    const video = this.root.querySelector("video");
    if (video) {
      const playing = (video as HTMLVideoElement).play?.();
      if (playing && typeof playing.catch === "function") {
        playing.catch(() => {
          /* autoplay refusal surfaces through the error event */
        });
      }
    }
  }

  private onPlaybackEnded(): void {
    this.state = playbackEnded(this.state);
    this.render();
  }

  private onMediaError(): void {
    this.state = mediaFailed(this.state, "The video failed to load. It will replay from the start.");
    this.render();
  }

  private async submitRating(rating: number): Promise<void> {
    const { sessionId, item } = this.state;
    try {
      const ack = await this.api.submitRating(sessionId!, item!.index, rating);
      if (ack.done) {
        this.storage.removeItem(STORAGE_KEY);
        this.state = sessionFinished(this.state);
        this.render();
      } else {
        await this.advance();
      }
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // replay or lost ack: the server cursor decides what happens next
        const next = await this.api.nextItem(sessionId!);
        if (next.status === "done" || next.index !== item!.index) {
          this.applyNext(next);
        } else {
          this.state = ratingRejected(this.state, error.message);
          this.render();
        }
      } else {
        this.state = ratingRejected(this.state, describe(error));
        this.render();
      }
    }
  }

  private reset(): void {
    this.storage.removeItem(STORAGE_KEY);
    this.state = backToSetup();
    this.render();
  }

  // --- rendering --------------------------------------------------------

  render(): void {
    const { phase } = this.state;
    if (phase === "setup") this.renderSetup();
    else if (phase === "instruction") this.renderInstruction();
    else if (phase === "playing") this.renderPlaying();
    else if (phase === "rating") this.renderRating();
    else this.renderFinished();
  }

  private renderSetup(): void {
    const smallDisplay =
      window.innerWidth < STAGE_WIDTH || window.innerHeight < STAGE_HEIGHT;
    this.root.innerHTML = `
      <section class="card" id="setup">
        <h1>Subjective quality test</h1>
        ${this.noticeHtml()}
        ${smallDisplay
          ? '<p class="warning">This display is smaller than 1920×1080; playback will be letterboxed, not scaled.</p>'
          : ""}
        <label>Participant name
          <input id="participant" type="text" autocomplete="off" />
        </label>
        <label>Videos (comma-separated ids, empty = all)
          <input id="videos" type="text" autocomplete="off" />
        </label>
        <label>Conditions (comma-separated, empty = all)
          <input id="conditions" type="text" autocomplete="off" />
        </label>
        <button id="create">CREATE SESSION</button>
      </section>`;
    this.on("#create", () => void this.createSession());
  }

  private renderInstruction(): void {
    const scale = RATING_LABELS.map(
      ([value, label]) => `<li><strong>${value}</strong> ${label}</li>`,
    ).join("");
    this.root.innerHTML = `
      <section class="card" id="instruction">
        <h1>Instructions</h1>
        <p>You will watch ${this.state.playlistLength} short videos, one at a time.
           Watch each video to the end. When it finishes, rate the quality of
           your viewing experience on this scale:</p>
        <ol class="scale" id="scale">${scale}</ol>
        <p>The videos cannot be paused or skipped, and every video must be rated.</p>
        <button id="start-test">START</button>
        <button id="back" class="secondary">BACK</button>
      </section>`;
    this.on("#start-test", () => void this.start());
    this.on("#back", () => this.reset());
  }

  private renderPlaying(): void {
    const { item, playlistLength, awaitingContinue } = this.state;
    const position = `Video ${item!.index + 1} of ${playlistLength}`;
    if (awaitingContinue) {
      this.root.innerHTML = `
        <section class="card" id="gate">
          <h1>${position}</h1>
          ${this.noticeHtml()}
          <button id="continue">CONTINUE</button>
        </section>`;
      this.on("#continue", () => this.beginPlayback());
      return;
    }
    this.root.innerHTML = `
      <section id="player">
        <p class="position">${position}</p>
        <div class="stage" id="stage"
             style="width:${STAGE_WIDTH}px;height:${STAGE_HEIGHT}px">
          <video id="video" width="${STAGE_WIDTH}" height="${STAGE_HEIGHT}"
                 src="${this.api.mediaUrl(item!.mediaToken)}"
                 preload="auto" autoplay></video>
        </div>
      </section>`;
    const video = this.root.querySelector("#video")!;
    video.addEventListener("ended", () => this.onPlaybackEnded());
    video.addEventListener("error", () => this.onMediaError());
  }

  private renderRating(): void {
    // keep the finished frame behind the modal; no dismiss path exists
    const buttons = RATING_LABELS.map(
      ([value, label]) => `
        <button class="rate" data-rating="${value}">
          <span class="value">${value}</span>
          <span class="label">${label}</span>
        </button>`,
    ).join("");
    this.root.innerHTML = `
      <section id="player">
        <p class="position">Video ${this.state.item!.index + 1} of ${this.state.playlistLength}</p>
        <div class="stage" style="width:${STAGE_WIDTH}px;height:${STAGE_HEIGHT}px"></div>
      </section>
      <div class="modal-backdrop" id="rating-modal">
        <div class="modal">
          <h2>How was the quality of this video?</h2>
          ${this.noticeHtml()}
          <div class="choices">${buttons}</div>
        </div>
      </div>`;
    this.root.querySelectorAll<HTMLButtonElement>("button.rate").forEach((button) => {
      button.addEventListener("click", () =>
        void this.submitRating(Number(button.dataset.rating)),
      );
    });
  }

  private renderFinished(): void {
    this.root.innerHTML = `
      <section class="card" id="finished">
        <h1>Test complete</h1>
        <p>Thank you. All ${this.state.playlistLength} ratings were recorded.</p>
        <button id="again">AGAIN</button>
        <button id="home" class="secondary">HOME</button>
      </section>`;
    // AGAIN hands the seat to the next participant; HOME just leaves
    this.on("#again", () => this.reset());
    this.on("#home", () => this.reset());
  }

  private noticeHtml(): string {
    return this.state.notice ? `<p class="notice">${this.state.notice}</p>` : "";
  }

  private on(selector: string, handler: () => void): void {
    this.root.querySelector(selector)!.addEventListener("click", handler);
  }

  private readList(selector: string): string[] {
    const field = this.root.querySelector(selector) as HTMLInputElement | null;
    if (!field) return [];
    return field.value
      .split(",")
      .map((part) => part.trim())
      .filter((part) => part.length > 0);
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.message} (HTTP ${error.status})`;
  return error instanceof Error ? error.message : String(error);
}
