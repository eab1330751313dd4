import { describe, expect, it } from "vitest";

import {
  formatPercent,
  renderConfidenceBars,
  renderDiagnosis,
  renderEmptyHistory,
  renderError,
  renderHistoryRow,
  renderRecommendation,
} from "../src/view.js";
import { HEALTHY, RECOMMENDATION, TRIGGERED } from "./fixtures.js";

describe("confidence bars", () => {
  it("renders one bar per class with widths that sum to 100%", () => {
    const bars = renderConfidenceBars(document, TRIGGERED.stage1);
    const rows = bars.querySelectorAll(".confidence-row");
    expect(rows).toHaveLength(3);
    const widths = [...bars.querySelectorAll<HTMLElement>(".confidence-fill")].map((el) =>
      parseFloat(el.style.width),
    );
    expect(widths.reduce((a, b) => a + b, 0)).toBeCloseTo(100, 5);
  });

  it("shows only values from the response", () => {
    const bars = renderConfidenceBars(document, HEALTHY.stage1);
    const labels = [...bars.querySelectorAll(".confidence-label")].map((el) => el.textContent);
    expect(labels).toEqual(Object.keys(HEALTHY.stage1.confidence));
    expect(bars.querySelector(".winner")?.textContent).toBe("healthy");
  });
});

describe("diagnosis view", () => {
  it("renders the level section iff stage2 is present", () => {
    const withLevel = renderDiagnosis(document, TRIGGERED);
    expect(withLevel.querySelector(".level-section")).not.toBeNull();
    expect(withLevel.querySelector(".level-badge")?.textContent).toBe("level-2");

    const withoutLevel = renderDiagnosis(document, HEALTHY);
    expect(withoutLevel.querySelector(".level-section")).toBeNull();
  });

  it("headline label comes verbatim from the API response", () => {
    const view = renderDiagnosis(document, TRIGGERED);
    expect(view.querySelector(".stage1-label")?.textContent).toBe(TRIGGERED.stage1.label);
  });

  it("renders all three recommendation parts, none dropped", () => {
    const panel = renderRecommendation(document, RECOMMENDATION);
    for (const part of ["treatment", "symptoms", "sources"] as const) {
      const body = panel.querySelector(`.part-${part}`);
      expect(body).not.toBeNull();
      const items = [...body!.querySelectorAll("li")].map((li) => li.textContent);
      expect(items).toEqual(RECOMMENDATION[part]);
    }
  });

  it("tabs switch the visible part", () => {
    const panel = renderRecommendation(document, RECOMMENDATION);
    document.body.appendChild(panel);
    const sourcesTab = panel.querySelector<HTMLButtonElement>('button[data-part="sources"]')!;
    sourcesTab.click();
    expect(panel.querySelector(".part-sources")?.classList.contains("hidden")).toBe(false);
    expect(panel.querySelector(".part-treatment")?.classList.contains("hidden")).toBe(true);
    panel.remove();
  });

  it("renders a thumbnail when an image url is given", () => {
    const view = renderDiagnosis(document, TRIGGERED, { imageUrl: "blob:fake" });
    expect(view.querySelector("img.thumbnail")?.getAttribute("src")).toBe("blob:fake");
  });
});

describe("history widgets", () => {
  it("row shows the labels and reacts to selection", () => {
    let picked = "";
    const row = renderHistoryRow(document, TRIGGERED, (id) => (picked = id));
    document.body.appendChild(row);
    expect(row.querySelector(".history-label")?.textContent).toBe("black-pod-rot");
    expect(row.querySelector(".history-level")?.textContent).toBe("level-2");
    row.click();
    expect(picked).toBe(TRIGGERED.id);
    row.remove();
  });

  it("healthy rows carry no level badge", () => {
    const row = renderHistoryRow(document, HEALTHY, () => {});
    expect(row.querySelector(".history-level")).toBeNull();
  });

  it("empty state renders", () => {
    expect(renderEmptyHistory(document).textContent).toMatch(/no diagnoses yet/i);
  });
});

describe("errors", () => {
  it("shows the message and a retry hook", () => {
    let retried = false;
    const banner = renderError(document, "image too large", () => (retried = true));
    document.body.appendChild(banner);
    expect(banner.textContent).toMatch(/image too large/);
    banner.querySelector<HTMLButtonElement>(".retry")!.click();
    expect(retried).toBe(true);
    banner.remove();
  });
});

describe("formatting", () => {
  it("formats probabilities to one decimal", () => {
    expect(formatPercent(0.7)).toBe("70.0%");
    expect(formatPercent(0.0449)).toBe("4.5%");
  });
});
