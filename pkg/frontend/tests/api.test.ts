import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { HEALTHY, TRIGGERED, historyPage, jsonResponse } from "./fixtures.js";

const fetchMock = vi.fn();
vi.stubGlobal("fetch", fetchMock);

afterEach(() => fetchMock.mockReset());

describe("ApiClient", () => {
  it("posts the image body with its content type", async () => {
    fetchMock.mockResolvedValue(jsonResponse(TRIGGERED));
    const api = new ApiClient("");
    const blob = new Blob([new Uint8Array([1, 2, 3])], { type: "image/jpeg" });
    const result = await api.diagnose(blob, "image/jpeg");
    expect(result.id).toBe("aa11");
    const [url, init] = fetchMock.mock.calls[0];
    expect(url).toBe("/api/diagnose");
    expect(init.method).toBe("POST");
    expect(init.headers["Content-Type"]).toBe("image/jpeg");
  });

  it("passes the pagination cursor through", async () => {
    fetchMock.mockResolvedValue(jsonResponse(historyPage([HEALTHY], null)));
    await new ApiClient("").history(5, "cursor123");
    expect(fetchMock.mock.calls[0][0]).toBe("/api/history?limit=5&before=cursor123");
  });

  it("omits the cursor on the first page", async () => {
    fetchMock.mockResolvedValue(jsonResponse(historyPage([], null)));
    await new ApiClient("").history(10);
    expect(fetchMock.mock.calls[0][0]).toBe("/api/history?limit=10");
  });

  it("maps 413 to an image-too-large message", async () => {
    fetchMock.mockResolvedValue(jsonResponse({ error: "too big" }, 413));
    const err = await new ApiClient("").diagnose(new Blob([""])).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(413);
    expect(err.message).toMatch(/too large/i);
  });

  it("maps 400 to an undecodable-image message", async () => {
    fetchMock.mockResolvedValue(jsonResponse({ error: "nope" }, 400));
    const err = await new ApiClient("").diagnose(new Blob([""])).catch((e) => e);
    expect(err.status).toBe(400);
    expect(err.message).toMatch(/could not be read/i);
  });

  it("encodes recommendation labels in the path", async () => {
    fetchMock.mockResolvedValue(jsonResponse({ disease: "healthy" }));
    await new ApiClient("").recommendation("black-pod-rot");
    expect(fetchMock.mock.calls[0][0]).toBe("/api/recommendations/black-pod-rot");
  });

  it("healthy() is false when the service is unreachable", async () => {
    fetchMock.mockRejectedValue(new TypeError("fetch failed"));
    expect(await new ApiClient("").healthy()).toBe(false);
  });
});
