/** Client-side annotation session: mirrors the server's click log and mask.
 *
 * Invariants:
 * - the click list equals the server's click set after every acknowledged
 *   request (duplicates the server suppressed are not appended locally);
 * - at most one request is in flight; further actions queue in order;
 * - a rejected request changes no local state (the error surfaces through the
 *   onError callback, e.g. a toast).
 */

import { AnnotationApi, ApiError, MaskResponse, Polarity } from "./api.js";
import { clampToImage, displayToImage, DisplayPoint } from "./coords.js";
import { decodeRle } from "./rle.js";

export interface ClickMarker {
  row: number;
  col: number;
  polarity: Polarity;
}

export interface SessionState {
  id: string | null;
  height: number;
  width: number;
  clicks: ClickMarker[];
  mask: Uint8Array | null;
  overlayOpacity: number;
  lastLatencyMs: number | null;
  lastIou: number | null;
}

export interface SessionCallbacks {
  onState?: (state: SessionState) => void;
  onError?: (message: string) => void;
}

export class AnnotationSession {
  private state: SessionState = {
    id: null,
    height: 0,
    width: 0,
    clicks: [],
    mask: null,
    overlayOpacity: 0.5,
    lastLatencyMs: null,
    lastIou: null,
  };

  /** Serialization point: every server-touching action chains onto this. */
  private pending: Promise<void> = Promise.resolve();

  constructor(
    private readonly api: AnnotationApi,
    private readonly callbacks: SessionCallbacks = {},
  ) {}

  get snapshot(): SessionState {
    return {
      ...this.state,
      clicks: [...this.state.clicks],
      mask: this.state.mask ? new Uint8Array(this.state.mask) : null,
    };
  }

  get displaySize(): { height: number; width: number } {
    return { height: this.state.height, width: this.state.width };
  }

  /** Wait until every queued action has been acknowledged. */
  idle(): Promise<void> {
    return this.pending;
  }

  private emit(): void {
    this.callbacks.onState?.(this.snapshot);
  }

  private fail(err: unknown): void {
    const message = err instanceof ApiError ? err.message : String(err);
    this.callbacks.onError?.(message);
  }

  private enqueue(op: () => Promise<void>): Promise<void> {
    this.pending = this.pending.then(op, op);
    return this.pending;
  }

  async open(image: Blob, gt?: Blob): Promise<void> {
    return this.enqueue(async () => {
      try {
        const info = await this.api.createSession(image, gt);
        this.state = {
          id: info.id,
          height: info.height,
          width: info.width,
          clicks: [],
          mask: new Uint8Array(info.height * info.width),
          overlayOpacity: this.state.overlayOpacity,
          lastLatencyMs: null,
          lastIou: null,
        };
        this.emit();
      } catch (err) {
        this.fail(err);
      }
    });
  }

  /** Canvas click -> pixel click. Out-of-canvas positions clamp to the image. */
  placeClickAt(point: DisplayPoint, polarity: Polarity, displayScale: number): Promise<void> {
    const raw = displayToImage(point, displayScale);
    const { row, col } = clampToImage(raw, this.state.height, this.state.width);
    return this.addClick(row, col, polarity);
  }

  addClick(row: number, col: number, polarity: Polarity): Promise<void> {
    return this.enqueue(async () => {
      const id = this.state.id;
      if (!id) {
        this.callbacks.onError?.("no active session");
        return;
      }
      try {
        const resp = await this.api.addClick(id, row, col, polarity);
        if (resp.click_count === this.state.clicks.length + 1) {
          this.state.clicks.push({ row, col, polarity });
        }
        // click_count === clicks.length: the server suppressed a duplicate
        this.applyMask(resp);
        this.emit();
      } catch (err) {
        this.fail(err);
      }
    });
  }

  undo(): Promise<void> {
    return this.enqueue(async () => {
      const id = this.state.id;
      if (!id) return;
      try {
        const resp = await this.api.undo(id);
        if (!resp.noop && resp.click_count === this.state.clicks.length - 1) {
          this.state.clicks.pop();
        }
        this.applyMask(resp);
        this.emit();
      } catch (err) {
        this.fail(err);
      }
    });
  }

  reset(): Promise<void> {
    return this.enqueue(async () => {
      const id = this.state.id;
      if (!id) return;
      try {
        const resp = await this.api.reset(id);
        this.state.clicks = [];
        this.applyMask(resp);
        this.emit();
      } catch (err) {
        this.fail(err);
      }
    });
  }

  setOverlayOpacity(opacity: number): void {
    this.state.overlayOpacity = Math.min(Math.max(opacity, 0), 1);
    this.emit();
  }

  private applyMask(resp: MaskResponse): void {
    this.state.mask = decodeRle(resp.mask_rle);
    this.state.lastLatencyMs = resp.latency_ms ?? this.state.lastLatencyMs;
    this.state.lastIou = resp.iou ?? null;
  }
}
