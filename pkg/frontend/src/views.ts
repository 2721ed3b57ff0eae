// DOM rendering. Render functions are pure: they take a payload plus
// handler callbacks and replace the container's children; all state lives
// in the caller (app.ts). Numbers shown are service values verbatim after
// display-unit conversion; nothing is recomputed here.

import { lineChart, Rect } from "./charts.js";
import { deg, fmt, kmh, thetaLine } from "./units.js";
import {
  ActiveQueryView,
  Choice,
  ExperimentView,
  FinishedView,
  QueryView,
  SessionRow,
} from "./types.js";

type Attrs = Record<string, string | boolean | ((ev: Event) => void)>;

function h(tag: string, attrs: Attrs = {}, children: (Node | string)[] = []): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (typeof v === "function") {
      node.addEventListener(k, v);
    } else if (typeof v === "boolean") {
      if (v) node.setAttribute(k, "");
    } else {
      node.setAttribute(k, v);
    }
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

function badge(label: string, kind: string): HTMLElement {
  return h("span", { class: `badge ${kind}`, "data-testid": `badge-${kind}` }, [label]);
}

export function errorBanner(message: string, testid = "banner-error"): HTMLElement {
  return h("div", { class: "banner error", "data-testid": testid, role: "alert" }, [message]);
}

// -- query window -----------------------------------------------------------

function metricsLine(scenario: string, exp: ExperimentView): string {
  const m = exp.metrics;
  const solve = `worst solve ${fmt((m.worst_solve_time ?? NaN) * 1000, 3)} ms`;
  if (scenario === "cstr") {
    return `t_f ${fmt(m.t_f)} hr · CA_end ${fmt(m.CA_end)} kgmol/m3 · ${solve}`;
  }
  return `t_f ${fmt(m.t_f)} s · min clearance ${fmt(m.min_lateral_clearance)} m · ${solve}`;
}

function cstrCharts(exp: ExperimentView, display: Record<string, any>): HTMLElement {
  const t = exp.trajectory.time;
  const s = exp.trajectory.signals;
  const wrap = h("div", { class: "charts" });
  wrap.appendChild(lineChart({
    title: "concentration CA",
    xLabel: "time [hr]",
    yLabel: "CA [kgmol/m3]",
    series: [{ label: "CA", x: t, y: s.CA }],
    refLines: typeof display.CA_ref === "number" ? [{ y: display.CA_ref, label: "CA_ref" }] : [],
  }));
  wrap.appendChild(lineChart({
    title: "coolant temperature Tc",
    xLabel: "time [hr]",
    yLabel: "Tc [K]",
    series: [{ label: "Tc", x: t, y: s.Tc }],
    refLines: [
      ...(typeof display.tc_low === "number" ? [{ y: display.tc_low, label: "Tc min" }] : []),
      ...(typeof display.tc_high === "number" ? [{ y: display.tc_high, label: "Tc max" }] : []),
    ],
  }));
  return wrap;
}

function drivingCharts(exp: ExperimentView, display: Record<string, any>): HTMLElement {
  const s = exp.trajectory.signals;
  const wrap = h("div", { class: "charts" });

  const rects: Rect[] = [];
  const obsX = Number(display.obs_x0);
  const obsSpeed = Number(display.obs_speed);
  const obsLen = Number(display.length);
  const obsWidth = Number(display.width);
  const tf = exp.metrics.t_f;
  if ([obsX, obsSpeed, obsLen, obsWidth, tf].every(Number.isFinite)) {
    rects.push({
      x0: obsX, x1: obsX + obsLen, y0: -obsWidth / 2, y1: obsWidth / 2,
      label: "obstacle t=0", fill: "#00000014",
    });
    const xf = obsX + obsSpeed * tf;
    rects.push({
      x0: xf, x1: xf + obsLen, y0: -obsWidth / 2, y1: obsWidth / 2,
      label: "obstacle t_f", fill: "#dc322033",
    });
  }
  wrap.appendChild(lineChart({
    title: "position trace",
    xLabel: "x_f [m]",
    yLabel: "y_f [m]",
    series: [{ label: "ego", x: s.x_f, y: s.y_f }],
    rects,
    ySpan: [-1, 4],
  }));
  wrap.appendChild(lineChart({
    title: "speed",
    xLabel: "x_f [m]",
    yLabel: "v [km/h]",
    series: [{ label: "v", x: s.x_f, y: (s.v ?? []).map(kmh) }],
  }));
  wrap.appendChild(lineChart({
    title: "steering angle",
    xLabel: "x_f [m]",
    yLabel: "delta_s [deg]",
    series: [{ label: "delta_s", x: s.x_f, y: (s.delta_s ?? []).map(deg) }],
    // time axis would compress the swerve; Fig-style x_f keeps it visible
  }));
  return wrap;
}

function panel(
  side: "left" | "right" | "incumbent",
  scenario: string,
  exp: ExperimentView,
  display: Record<string, any>,
  isIncumbent: boolean,
): HTMLElement {
  const header = h("div", { class: "panel-header" }, [
    h("span", { class: "panel-side" }, [side.toUpperCase()]),
    h("span", { class: "panel-index" }, [`experiment #${exp.index}`]),
  ]);
  if (isIncumbent) header.appendChild(badge("incumbent", "incumbent"));
  if (exp.metrics.collision_flag) header.appendChild(badge("COLLISION", "collision"));
  if (exp.status !== "completed") header.appendChild(badge(exp.status, "status"));

  const charts = scenario === "cstr" ? cstrCharts(exp, display) : drivingCharts(exp, display);
  return h("article", { class: "panel", "data-testid": `panel-${side}` }, [
    header,
    h("div", { class: "panel-theta" }, [thetaLine(exp.theta)]),
    h("div", { class: "panel-metrics" }, [metricsLine(scenario, exp)]),
    charts,
  ]);
}

export interface QueryHandlers {
  onChoice(choice: Choice): void;
}

export interface QueryState {
  busy: boolean;
  error?: string;
}

function choiceButton(label: string, choice: Choice, state: QueryState, handlers: QueryHandlers): HTMLElement {
  return h("button", {
    "data-testid": `btn-${choice}`,
    disabled: state.busy,
    click: () => handlers.onChoice(choice),
  }, [label]);
}

function renderActive(view: ActiveQueryView, state: QueryState, handlers: QueryHandlers): HTMLElement[] {
  const [left, right] = view.pair;
  return [
    h("div", { class: "pair" }, [
      panel("left", view.scenario, left, view.display, left.index === view.incumbent),
      panel("right", view.scenario, right, view.display, right.index === view.incumbent),
    ]),
    h("div", { class: "choices" }, [
      choiceButton("Prefer left", "left", state, handlers),
      choiceButton("As good as (tie)", "tie", state, handlers),
      choiceButton("Prefer right", "right", state, handlers),
    ]),
  ];
}

function renderFinished(view: FinishedView): HTMLElement[] {
  const table = h("table", { class: "history", "data-testid": "history-table" });
  table.appendChild(h("tr", {}, [
    h("th", {}, ["#"]), h("th", {}, ["theta"]), h("th", {}, ["score"]), h("th", {}, ["status"]),
  ]));
  for (const row of view.history) {
    const tr = h("tr", {}, [
      h("td", {}, [String(row.index)]),
      h("td", {}, [thetaLine(row.theta)]),
      h("td", {}, [fmt(row.score)]),
      h("td", {}, [row.status]),
    ]);
    if (row.index === view.incumbent.index) tr.classList.add("winner");
    table.appendChild(tr);
  }
  return [
    h("div", { class: "finished", "data-testid": "finished" }, ["session complete"]),
    h("div", { class: "pair" }, [
      panel("incumbent", view.scenario, view.incumbent, view.display, true),
    ]),
    table,
  ];
}

export interface QueryPageOptions {
  exportUrl(format: "csv" | "session-file"): string;
}

export function renderQueryView(
  root: HTMLElement,
  view: QueryView,
  state: QueryState,
  handlers: QueryHandlers,
  opts: QueryPageOptions,
): void {
  try {
    const children: (Node | string)[] = [
      h("nav", {}, [h("a", { href: "#/" }, ["← sessions"])]),
      h("h2", {}, [`${view.scenario} session ${view.id.slice(0, 8)}`]),
      h("div", { class: "progress", "data-testid": "progress" },
        [`experiment ${view.progress.n} / ${view.progress.n_max}`]),
    ];
    if (state.error) {
      children.push(errorBanner(`${state.error} — the displayed query is unchanged, pick again to retry`));
    }
    if (view.type === "query") {
      children.push(...renderActive(view, state, handlers));
    } else {
      children.push(...renderFinished(view));
      children.push(h("div", { class: "exports" }, [
        h("a", { href: opts.exportUrl("csv"), "data-testid": "export-csv" }, ["download trajectories (zip)"]),
        " · ",
        h("a", { href: opts.exportUrl("session-file"), "data-testid": "export-session-file" }, ["session file (json)"]),
      ]));
    }
    root.replaceChildren(...children);
  } catch (err) {
    root.replaceChildren(
      errorBanner(`malformed service payload: ${err instanceof Error ? err.message : String(err)}`),
    );
  }
}

// -- dashboard ---------------------------------------------------------------

export interface DashboardHandlers {
  onCreate(scenario: string, config: Record<string, unknown>): void;
  onOpen(id: string): void;
  exportUrl(id: string, format: "csv" | "session-file"): string;
}

export interface DashboardState {
  rows: SessionRow[] | null;
  offline?: string;
  formError?: string;
  busy: boolean;
}

const CONFIG_FIELDS = ["seed", "n_init", "n_max", "delta"] as const;

function createForm(state: DashboardState, handlers: DashboardHandlers): HTMLElement {
  const scenarioSelect = h("select", { "data-testid": "create-scenario" }, [
    h("option", { value: "cstr" }, ["cstr"]),
    h("option", { value: "driving" }, ["driving"]),
  ]) as HTMLSelectElement;

  const inputs = new Map<string, HTMLInputElement>();
  const fields = CONFIG_FIELDS.map((name) => {
    const input = h("input", {
      name,
      placeholder: "default",
      "data-testid": `create-${name}`,
    }) as HTMLInputElement;
    inputs.set(name, input);
    return h("label", {}, [`${name} `, input]);
  });

  const submit = () => {
    const config: Record<string, unknown> = {};
    for (const [name, input] of inputs) {
      const raw = input.value.trim();
      if (raw === "") continue;
      // non-numeric text goes through untouched so the service's own
      // validation message comes back and is echoed inline
      const num = Number(raw);
      config[name] = Number.isFinite(num) ? num : raw;
    }
    handlers.onCreate(scenarioSelect.value, config);
  };

  const form = h("form", {
    class: "create",
    "data-testid": "create-form",
    submit: (ev) => {
      ev.preventDefault();
      submit();
    },
  }, [
    h("strong", {}, ["new session"]),
    h("label", {}, ["scenario ", scenarioSelect]),
    ...fields,
    h("button", { type: "submit", disabled: state.busy, "data-testid": "create-submit" }, ["create"]),
  ]);
  if (state.formError) {
    form.appendChild(h("div", { class: "field-error", "data-testid": "form-error" }, [state.formError]));
  }
  return form;
}

function sessionTable(rows: SessionRow[], handlers: DashboardHandlers): HTMLElement {
  const table = h("table", { class: "sessions", "data-testid": "session-table" });
  table.appendChild(h("tr", {}, [
    h("th", {}, ["session"]), h("th", {}, ["scenario"]), h("th", {}, ["phase"]),
    h("th", {}, ["progress"]), h("th", {}, ["updated"]), h("th", {}, ["export"]),
  ]));
  for (const row of rows) {
    if (row.error !== undefined) {
      table.appendChild(h("tr", { class: "broken", "data-testid": "session-row" }, [
        h("td", {}, [row.id]),
        h("td", { colspan: "5" }, [`unreadable: ${row.error}`]),
      ]));
      continue;
    }
    const finished = row.phase === "finished";
    table.appendChild(h("tr", { "data-testid": "session-row" }, [
      h("td", {}, [h("a", {
        href: `#/session/${row.id}`,
        "data-testid": "session-link",
        click: (ev) => {
          ev.preventDefault();
          handlers.onOpen(row.id);
        },
      }, [row.id.slice(0, 8)])]),
      h("td", {}, [row.scenario ?? ""]),
      h("td", {}, [row.phase ?? ""]),
      h("td", {}, [`${row.n} / ${row.n_max}`]),
      h("td", {}, [row.updated ?? ""]),
      h("td", {}, finished
        ? [
            h("a", { href: handlers.exportUrl(row.id, "csv"), "data-testid": "export-csv" }, ["csv"]),
            " · ",
            h("a", { href: handlers.exportUrl(row.id, "session-file"), "data-testid": "export-session-file" }, ["json"]),
          ]
        : ["—"]),
    ]));
  }
  return table;
}

export function renderDashboard(
  root: HTMLElement,
  state: DashboardState,
  handlers: DashboardHandlers,
): void {
  const children: (Node | string)[] = [h("h2", {}, ["preference tuning sessions"])];
  if (state.offline) {
    children.push(errorBanner(`service unreachable: ${state.offline}`, "banner-offline"));
  }
  if (state.rows !== null) {
    if (state.rows.length === 0) {
      children.push(h("p", { class: "empty", "data-testid": "empty-list" }, ["no sessions yet"]));
    } else {
      children.push(sessionTable(state.rows, handlers));
    }
  }
  children.push(createForm(state, handlers));
  root.replaceChildren(...children);
}
