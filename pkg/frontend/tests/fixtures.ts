import type { Diagnosis, HistoryPage, RecommendationEntry } from "../src/types.js";

export const RECOMMENDATION: RecommendationEntry = {
  disease: "black-pod-rot",
  treatment: ["Remove infected pods.", "Apply copper fungicide at label rate."],
  symptoms: ["Brown lesion spreading from the pod tip.", "Whitish growth in humid weather."],
  sources: ["Extension office bulletin.", "Pathologist field notes."],
};

export const TRIGGERED: Diagnosis = {
  id: "aa11",
  timestamp: "2021-06-01T10:00:00+00:00",
  image_ref: "sha256:abc",
  stage1: {
    label: "black-pod-rot",
    confidence: { "black-pod-rot": 0.7, healthy: 0.2, "pod-borer": 0.1 },
  },
  stage2: {
    label: "level-2",
    confidence: { "level-1": 0.25, "level-2": 0.6, "level-3": 0.15 },
  },
  recommendation_key: "black-pod-rot",
  model_versions: { disease: "d1", level: "l1" },
  recommendation: RECOMMENDATION,
};

export const HEALTHY: Diagnosis = {
  id: "bb22",
  timestamp: "2021-06-01T11:00:00+00:00",
  image_ref: "sha256:def",
  stage1: {
    label: "healthy",
    confidence: { "black-pod-rot": 0.05, healthy: 0.9, "pod-borer": 0.05 },
  },
  recommendation_key: "healthy",
  model_versions: { disease: "d1", level: "l1" },
};

export function historyPage(items: Diagnosis[], nextBefore: string | null = null): HistoryPage {
  return { items, next_before: nextBefore };
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
