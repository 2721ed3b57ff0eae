// Pins the preference encoding: the left panel is the first index of the
// served pair, left-better posts b = -1, "as good as" posts b = 0, and
// right-better posts b = +1.

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { App } from "../src/app.js";
import { choiceToB } from "../src/types.js";
import { MockService } from "./mock.js";

describe("choiceToB", () => {
  it("maps left to -1", () => {
    expect(choiceToB("left")).toBe(-1);
  });

  it("maps tie to 0", () => {
    expect(choiceToB("tie")).toBe(0);
  });

  it("maps right to +1", () => {
    expect(choiceToB("right")).toBe(1);
  });
});

describe("clicks post the convention", () => {
  let root: HTMLElement;
  let mock: MockService;
  let app: App;

  beforeEach(async () => {
    document.body.innerHTML = '<div id="root"></div>';
    root = document.getElementById("root")!;
    mock = new MockService();
    const api = new ApiClient("", mock.fetch);
    const created = await api.createSession("cstr", { n_max: 10 });
    window.location.hash = `#/session/${created.id}`;
    app = new App(root, api, 3600_000);
    app.start();
    await app.lastOp;
  });

  afterEach(() => {
    app.stop();
    window.location.hash = "";
  });

  function click(testid: string): void {
    (root.querySelector(`[data-testid="${testid}"]`) as HTMLButtonElement).click();
  }

  it("left click on the pair (new, incumbent) posts b = -1", async () => {
    click("btn-left");
    await app.lastOp;
    click("btn-left"); // second query pairs (new, incumbent)
    await app.lastOp;
    expect(mock.preferencePosts().map((r) => r.body.b)).toEqual([-1, -1]);
  });

  it("tie click posts b = 0", async () => {
    click("btn-tie");
    await app.lastOp;
    expect(mock.preferencePosts().map((r) => r.body.b)).toEqual([0]);
  });

  it("right click posts b = +1", async () => {
    click("btn-right");
    await app.lastOp;
    expect(mock.preferencePosts().map((r) => r.body.b)).toEqual([1]);
  });
});
