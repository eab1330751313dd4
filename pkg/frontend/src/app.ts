/** Page wiring: capture/upload, result rendering, history browsing.
 *
 * Single-page, same-origin with the diagnosis service. At most one
 * diagnose request is in flight at a time (the button is disabled while
 * pending) so the history order always matches what the farmer did.
 */

import { ApiClient, ApiError } from "./api.js";
import type { Diagnosis } from "./types.js";
import {
  renderDiagnosis,
  renderEmptyHistory,
  renderError,
  renderHistoryRow,
} from "./view.js";

const PAGE_SIZE = 10;

export class FieldApp {
  private nextBefore: string | null = null;
  private busy = false;
  private stream: MediaStream | null = null;

  constructor(
    private readonly doc: Document,
    private readonly api: ApiClient,
  ) {}

  private byId<T extends HTMLElement>(id: string): T {
    const node = this.doc.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
  }

  start(): void {
    this.byId<HTMLInputElement>("file-input").addEventListener("change", (event) => {
      const input = event.target as HTMLInputElement;
      const file = input.files?.[0];
      if (file) void this.diagnoseBlob(file, file.type || "image/png");
      input.value = "";
    });
    this.byId<HTMLButtonElement>("camera-button").addEventListener("click", () => {
      void this.toggleCamera();
    });
    this.byId<HTMLButtonElement>("capture-button").addEventListener("click", () => {
      void this.captureFrame();
    });
    this.byId<HTMLButtonElement>("more-button").addEventListener("click", () => {
      void this.loadHistory(false);
    });
    void this.loadHistory(true);
  }

  /** Camera capture with graceful fallback to the file picker. */
  private async toggleCamera(): Promise<void> {
    const video = this.byId<HTMLVideoElement>("camera-preview");
    const captureButton = this.byId<HTMLButtonElement>("capture-button");
    if (this.stream) {
      this.stopCamera();
      return;
    }
    if (!navigator.mediaDevices?.getUserMedia) {
      this.showError("No camera available here; use the file picker instead.");
      return;
    }
    try {
      this.stream = await navigator.mediaDevices.getUserMedia({
        video: { facingMode: "environment" },
      });
      video.srcObject = this.stream;
      video.classList.remove("hidden");
      captureButton.classList.remove("hidden");
      await video.play();
    } catch {
      this.showError("Camera permission denied; use the file picker instead.");
    }
  }

  private stopCamera(): void {
    this.stream?.getTracks().forEach((track) => track.stop());
    this.stream = null;
    this.byId<HTMLVideoElement>("camera-preview").classList.add("hidden");
    this.byId<HTMLButtonElement>("capture-button").classList.add("hidden");
  }

  private async captureFrame(): Promise<void> {
    const video = this.byId<HTMLVideoElement>("camera-preview");
    const canvas = this.doc.createElement("canvas");
    canvas.width = video.videoWidth || 640;
    canvas.height = video.videoHeight || 480;
    canvas.getContext("2d")?.drawImage(video, 0, 0);
    const blob = await new Promise<Blob | null>((resolve) =>
      canvas.toBlob(resolve, "image/png"),
    );
    this.stopCamera();
    if (blob) await this.diagnoseBlob(blob, "image/png");
  }

  async diagnoseBlob(image: Blob, contentType: string): Promise<Diagnosis | null> {
    if (this.busy) return null;
    this.setBusy(true);
    this.clearError();
    try {
      const diagnosis = await this.api.diagnose(image, contentType);
      const url = URL.createObjectURL(image);
      const result = this.byId<HTMLElement>("result");
      result.replaceChildren(renderDiagnosis(this.doc, diagnosis, { imageUrl: url }));
      await this.loadHistory(true);
      return diagnosis;
    } catch (error) {
      if (error instanceof ApiError) {
        this.showError(error.message);
      } else {
        this.showError("Could not reach the diagnosis service.", () => {
          void this.diagnoseBlob(image, contentType);
        });
      }
      return null;
    } finally {
      this.setBusy(false);
    }
  }

  /** Newest-first pages chained through the `before` cursor. */
  async loadHistory(reset: boolean): Promise<void> {
    const list = this.byId<HTMLElement>("history-list");
    const moreButton = this.byId<HTMLButtonElement>("more-button");
    try {
      const page = await this.api.history(PAGE_SIZE, reset ? null : this.nextBefore);
      if (reset) list.replaceChildren();
      for (const item of page.items) {
        list.appendChild(renderHistoryRow(this.doc, item, (id) => void this.showDetail(id)));
      }
      if (reset && page.items.length === 0) {
        list.replaceChildren(renderEmptyHistory(this.doc));
      }
      this.nextBefore = page.next_before;
      moreButton.classList.toggle("hidden", page.next_before === null);
    } catch {
      this.showError("Could not load the diagnosis history.", () => {
        void this.loadHistory(reset);
      });
    }
  }

  private async showDetail(id: string): Promise<void> {
    try {
      const diagnosis = await this.api.historyItem(id);
      const recommendation = await this.api.recommendation(diagnosis.recommendation_key);
      const result = this.byId<HTMLElement>("result");
      result.replaceChildren(
        renderDiagnosis(this.doc, { ...diagnosis, recommendation }),
      );
      result.scrollIntoView?.({ behavior: "smooth" });
    } catch (error) {
      this.showError(error instanceof ApiError ? error.message : "Could not load that record.");
    }
  }

  private setBusy(busy: boolean): void {
    this.busy = busy;
    this.byId<HTMLButtonElement>("camera-button").disabled = busy;
    this.byId<HTMLButtonElement>("capture-button").disabled = busy;
    this.byId<HTMLInputElement>("file-input").disabled = busy;
    this.byId<HTMLElement>("spinner").classList.toggle("hidden", !busy);
  }

  private showError(message: string, onRetry?: () => void): void {
    this.byId<HTMLElement>("errors").replaceChildren(renderError(this.doc, message, onRetry));
  }

  private clearError(): void {
    this.byId<HTMLElement>("errors").replaceChildren();
  }
}

/* istanbul ignore next: real-browser entry point */
if (typeof document !== "undefined" && document.getElementById("file-input")) {
  new FieldApp(document, new ApiClient("")).start();
}
