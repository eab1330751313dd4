/** DOM rendering for diagnosis results and history.
 *
 * Everything rendered is taken verbatim from API responses: labels,
 * confidences and recommendation text are never invented client-side.
 * The infection-level section appears if and only if the response
 * carries a stage2 block.
 */

import type { Diagnosis, RecommendationEntry, StageResult } from "./types.js";

export function formatPercent(p: number): string {
  return `${(p * 100).toFixed(1)}%`;
}

export function formatTimestamp(iso: string): string {
  const date = new Date(iso);
  return Number.isNaN(date.getTime()) ? iso : date.toLocaleString();
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** One bar per class; widths are the exact probabilities, so a full
 * vector always adds up to 100% of the track. */
export function renderConfidenceBars(doc: Document, stage: StageResult): HTMLElement {
  const wrap = el(doc, "div", "confidence-bars");
  for (const [label, value] of Object.entries(stage.confidence)) {
    const row = el(doc, "div", "confidence-row");
    row.dataset.label = label;
    const name = el(doc, "span", "confidence-label", label);
    if (label === stage.label) name.classList.add("winner");
    const track = el(doc, "div", "confidence-track");
    const bar = el(doc, "div", "confidence-fill");
    bar.style.width = `${(value * 100).toFixed(2)}%`;
    track.appendChild(bar);
    const pct = el(doc, "span", "confidence-value", formatPercent(value));
    row.append(name, track, pct);
    wrap.appendChild(row);
  }
  return wrap;
}

const RECOMMENDATION_PARTS: Array<keyof Pick<RecommendationEntry, "treatment" | "symptoms" | "sources">> =
  ["treatment", "symptoms", "sources"];

/** Tabbed treatment / symptoms / sources panel; every part present in
 * the entry is rendered, none dropped. */
export function renderRecommendation(doc: Document, entry: RecommendationEntry): HTMLElement {
  const panel = el(doc, "section", "recommendation");
  panel.appendChild(el(doc, "h3", "recommendation-title", `Management guidance: ${entry.disease}`));
  const tabs = el(doc, "div", "tabs");
  const bodies: HTMLElement[] = [];
  RECOMMENDATION_PARTS.forEach((part, index) => {
    const tab = el(doc, "button", "tab", part);
    tab.type = "button";
    tab.dataset.part = part;
    const body = el(doc, "ul", `tab-body part-${part}`);
    for (const line of entry[part]) {
      body.appendChild(el(doc, "li", undefined, line));
    }
    if (index !== 0) body.classList.add("hidden");
    else tab.classList.add("active");
    tab.addEventListener("click", () => {
      bodies.forEach((b) => b.classList.add("hidden"));
      tabs.querySelectorAll(".tab").forEach((t) => t.classList.remove("active"));
      body.classList.remove("hidden");
      tab.classList.add("active");
    });
    tabs.appendChild(tab);
    bodies.push(body);
  });
  panel.appendChild(tabs);
  bodies.forEach((body) => panel.appendChild(body));
  return panel;
}

export interface DiagnosisViewOptions {
  /** Object URL (or data URL) of the uploaded image, when available. */
  imageUrl?: string;
}

export function renderDiagnosis(
  doc: Document,
  diagnosis: Diagnosis,
  options: DiagnosisViewOptions = {},
): HTMLElement {
  const view = el(doc, "article", "diagnosis-view");
  view.dataset.id = diagnosis.id;

  if (options.imageUrl) {
    const img = el(doc, "img", "thumbnail");
    img.src = options.imageUrl;
    img.alt = "diagnosed pod photo";
    view.appendChild(img);
  }

  const headline = el(doc, "header", "headline");
  headline.appendChild(el(doc, "h2", "stage1-label", diagnosis.stage1.label));
  headline.appendChild(
    el(doc, "time", "timestamp", formatTimestamp(diagnosis.timestamp)),
  );
  view.appendChild(headline);
  view.appendChild(renderConfidenceBars(doc, diagnosis.stage1));

  if (diagnosis.stage2) {
    const level = el(doc, "section", "level-section");
    const badge = el(doc, "span", "level-badge", diagnosis.stage2.label);
    level.appendChild(el(doc, "h3", undefined, "Infection level"));
    level.appendChild(badge);
    level.appendChild(renderConfidenceBars(doc, diagnosis.stage2));
    view.appendChild(level);
  }

  if (diagnosis.recommendation) {
    view.appendChild(renderRecommendation(doc, diagnosis.recommendation));
  }
  return view;
}

export function renderHistoryRow(
  doc: Document,
  diagnosis: Diagnosis,
  onSelect: (id: string) => void,
): HTMLElement {
  const row = el(doc, "button", "history-row");
  row.type = "button";
  row.dataset.id = diagnosis.id;
  row.appendChild(el(doc, "span", "history-label", diagnosis.stage1.label));
  if (diagnosis.stage2) {
    row.appendChild(el(doc, "span", "history-level", diagnosis.stage2.label));
  }
  row.appendChild(el(doc, "span", "history-time", formatTimestamp(diagnosis.timestamp)));
  row.addEventListener("click", () => onSelect(diagnosis.id));
  return row;
}

export function renderEmptyHistory(doc: Document): HTMLElement {
  const empty = el(doc, "div", "empty-state");
  empty.appendChild(el(doc, "p", undefined, "No diagnoses yet."));
  empty.appendChild(
    el(doc, "p", undefined, "Capture or upload a pod photo to start a field log."),
  );
  return empty;
}

export function renderError(doc: Document, message: string, onRetry?: () => void): HTMLElement {
  const banner = el(doc, "div", "error-banner");
  banner.setAttribute("role", "alert");
  banner.appendChild(el(doc, "span", undefined, message));
  if (onRetry) {
    const retry = el(doc, "button", "retry", "Retry");
    retry.type = "button";
    retry.addEventListener("click", onRetry);
    banner.appendChild(retry);
  }
  return banner;
}
