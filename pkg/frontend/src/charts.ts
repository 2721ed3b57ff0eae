// Dependency-free SVG line charts. Every number plotted comes straight
// from a service payload (after display-unit conversion in the caller).

import { fmt } from "./units.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color?: string;
  dash?: boolean;
}

export interface RefLine {
  y: number;
  label: string;
}

export interface Rect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  label?: string;
  fill?: string;
}

export interface ChartOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  refLines?: RefLine[];
  rects?: Rect[];
  width?: number;
  height?: number;
  /** Force the y window to at least cover this range. */
  ySpan?: [number, number];
}

const MARGIN = { left: 46, right: 10, top: 22, bottom: 26 };
const COLORS = ["#1965b0", "#dc3220", "#117733", "#994f88"];

function el<K extends string>(tag: K, attrs: Record<string, string | number>): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, String(v));
  return node;
}

function text(s: string, attrs: Record<string, string | number>): SVGElement {
  const node = el("text", { "font-size": 10, fill: "#444", ...attrs });
  node.textContent = s;
  return node;
}

function extent(values: number[], lo = Infinity, hi = -Infinity): [number, number] {
  for (const v of values) {
    if (!Number.isFinite(v)) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo > hi) return [0, 1];
  if (lo === hi) return [lo - 0.5, hi + 0.5];
  return [lo, hi];
}

export function lineChart(opts: ChartOptions): SVGSVGElement {
  const width = opts.width ?? 340;
  const height = opts.height ?? 170;
  const svg = el("svg", {
    viewBox: `0 0 ${width} ${height}`,
    width,
    height,
    role: "img",
  }) as SVGSVGElement;
  svg.classList.add("chart");

  let [xLo, xHi] = [Infinity, -Infinity];
  let [yLo, yHi] = [Infinity, -Infinity];
  for (const s of opts.series) {
    [xLo, xHi] = extent(s.x, xLo, xHi);
    [yLo, yHi] = extent(s.y, yLo, yHi);
  }
  for (const r of opts.refLines ?? []) [yLo, yHi] = extent([r.y], yLo, yHi);
  for (const r of opts.rects ?? []) {
    [xLo, xHi] = extent([r.x0, r.x1], xLo, xHi);
    [yLo, yHi] = extent([r.y0, r.y1], yLo, yHi);
  }
  if (opts.ySpan) [yLo, yHi] = extent(opts.ySpan, yLo, yHi);
  if (!Number.isFinite(xLo)) [xLo, xHi] = [0, 1];
  if (!Number.isFinite(yLo)) [yLo, yHi] = [0, 1];
  const yPad = 0.06 * (yHi - yLo);
  yLo -= yPad;
  yHi += yPad;

  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;
  const px = (x: number) => MARGIN.left + ((x - xLo) / (xHi - xLo)) * plotW;
  const py = (y: number) => MARGIN.top + (1 - (y - yLo) / (yHi - yLo)) * plotH;

  svg.appendChild(el("rect", {
    x: MARGIN.left, y: MARGIN.top, width: plotW, height: plotH,
    fill: "none", stroke: "#999", "stroke-width": 0.8,
  }));
  svg.appendChild(text(opts.title, { x: MARGIN.left, y: 13, "font-size": 11, "font-weight": "bold", class: "chart-title" }));
  svg.appendChild(text(opts.xLabel, { x: MARGIN.left + plotW / 2, y: height - 6, "text-anchor": "middle" }));
  const yl = text(opts.yLabel, { x: 12, y: MARGIN.top + plotH / 2, "text-anchor": "middle" });
  yl.setAttribute("transform", `rotate(-90 12 ${MARGIN.top + plotH / 2})`);
  svg.appendChild(yl);

  // corner tick labels are enough at this size
  svg.appendChild(text(fmt(xLo, 3), { x: MARGIN.left, y: height - 16, "text-anchor": "start" }));
  svg.appendChild(text(fmt(xHi, 3), { x: MARGIN.left + plotW, y: height - 16, "text-anchor": "end" }));
  svg.appendChild(text(fmt(yHi, 3), { x: MARGIN.left - 4, y: MARGIN.top + 8, "text-anchor": "end" }));
  svg.appendChild(text(fmt(yLo, 3), { x: MARGIN.left - 4, y: MARGIN.top + plotH, "text-anchor": "end" }));

  for (const r of opts.rects ?? []) {
    const x = px(Math.min(r.x0, r.x1));
    const y = py(Math.max(r.y0, r.y1));
    const node = el("rect", {
      x, y,
      width: Math.abs(px(r.x1) - px(r.x0)),
      height: Math.abs(py(r.y0) - py(r.y1)),
      fill: r.fill ?? "#00000022",
      stroke: "#666",
      "stroke-width": 0.7,
      class: "chart-rect",
    });
    svg.appendChild(node);
    if (r.label) {
      svg.appendChild(text(r.label, {
        x: x + 2, y: y - 2, "font-size": 9, class: "chart-rect-label",
      }));
    }
  }

  for (const ref of opts.refLines ?? []) {
    svg.appendChild(el("line", {
      x1: MARGIN.left, x2: MARGIN.left + plotW, y1: py(ref.y), y2: py(ref.y),
      stroke: "#888", "stroke-dasharray": "4 3", "stroke-width": 0.8,
    }));
    svg.appendChild(text(ref.label, {
      x: MARGIN.left + plotW - 2, y: py(ref.y) - 3, "text-anchor": "end", "font-size": 9,
    }));
  }

  opts.series.forEach((s, idx) => {
    const pts = [];
    for (let i = 0; i < Math.min(s.x.length, s.y.length); i++) {
      if (Number.isFinite(s.x[i]) && Number.isFinite(s.y[i])) {
        pts.push(`${px(s.x[i]).toFixed(1)},${py(s.y[i]).toFixed(1)}`);
      }
    }
    const line = el("polyline", {
      points: pts.join(" "),
      fill: "none",
      stroke: s.color ?? COLORS[idx % COLORS.length],
      "stroke-width": 1.4,
      class: "chart-series",
      "data-label": s.label,
    });
    if (s.dash) line.setAttribute("stroke-dasharray", "5 3");
    svg.appendChild(line);
    if (opts.series.length > 1) {
      svg.appendChild(text(s.label, {
        x: MARGIN.left + plotW - 2,
        y: MARGIN.top + 10 + 10 * idx,
        "text-anchor": "end",
        fill: s.color ?? COLORS[idx % COLORS.length],
        "font-size": 9,
      }));
    }
  });

  return svg;
}
