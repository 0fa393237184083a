/**
 * Convergence figures: seed-averaged metric vs model evaluations, log-x
 * (and log-y for error metrics), one panel per dimension, one line per
 * method/surrogate combination.
 */
import { writeFileSync } from "fs";
import { MetricName, Series, aggregate } from "./aggregate.js";
import { TraceRow } from "./csv.js";
import {
  circleMarkers,
  color,
  legend,
  logScale,
  panelChrome,
  polyline,
  svgDocument,
} from "./svg.js";

export interface ConvergenceSpec {
  metric: MetricName;
  title?: string;
  panelWidth?: number;
  panelHeight?: number;
}

const METRIC_LABEL: Record<MetricName, string> = {
  rmse_mean: "RMSE of posterior mean",
  rmse_var: "RMSE of posterior variance",
  wasserstein: "Sinkhorn divergence",
  ess_per_eval: "ESS per model evaluation",
};

export function renderConvergence(rows: TraceRow[], spec: ConvergenceSpec): string {
  const series = aggregate(rows, spec.metric);
  const dims = [...new Set(series.map((s) => s.d))].sort((a, b) => a - b);
  const labels = [...new Set(series.map((s) => s.label))].sort();
  const colorOf = new Map(labels.map((l, i) => [l, color(i)]));

  const pw = spec.panelWidth ?? 300;
  const ph = spec.panelHeight ?? 220;
  const marginLeft = 64;
  const marginTop = 40;
  const gap = 46;
  const legendWidth = 150;
  const width = marginLeft + dims.length * (pw + gap) + legendWidth;
  const height = marginTop + ph + 60;

  const body: string[] = [];
  dims.forEach((d, panelIdx) => {
    const panelSeries = series.filter((s) => s.d === d && s.points.length > 0);
    const xs = panelSeries.flatMap((s) => s.points.map((p) => p.nEval));
    const ys = panelSeries.flatMap((s) => s.points.map((p) => p.value));
    const x0 = marginLeft + panelIdx * (pw + gap);
    const frame = {
      x: x0,
      y: marginTop,
      width: pw,
      height: ph,
      title: `d = ${d}`,
      xScale: logScale(Math.min(...xs), Math.max(...xs), x0, x0 + pw),
      yScale: logScale(
        Math.max(Math.min(...ys), 1e-12),
        Math.max(...ys),
        marginTop + ph,
        marginTop,
      ),
      xLabel: "model evaluations",
      yLabel: METRIC_LABEL[spec.metric],
    };
    body.push(panelChrome(frame));
    for (const s of panelSeries) {
      const pts = s.points.map(
        (p) => [frame.xScale(p.nEval), frame.yScale(p.value)] as [number, number],
      );
      const c = colorOf.get(s.label)!;
      body.push(polyline(pts, c));
      if (pts.length === 1) {
        body.push(circleMarkers(pts, c, 3.5));
      }
    }
  });
  body.push(
    legend(
      labels.map((l) => ({ label: l, color: colorOf.get(l)! })),
      marginLeft + dims.length * (pw + gap) + 8,
      marginTop + 10,
    ),
  );
  if (spec.title) {
    body.push(
      `<text x="${width / 2}" y="18" font-size="13" text-anchor="middle" font-weight="bold">${spec.title}</text>`,
    );
  }
  return svgDocument(width, height, body.join("\n"));
}

export function writeConvergence(rows: TraceRow[], spec: ConvergenceSpec, out: string) {
  writeFileSync(out, renderConvergence(rows, spec));
}

/** ESS-per-evaluation vs dimension: one marker-line per method/surrogate. */
export function renderEssScaling(rows: TraceRow[]): string {
  const series = aggregate(rows, "ess_per_eval");
  const labels = [...new Set(series.map((s) => s.label))].sort();
  const colorOf = new Map(labels.map((l, i) => [l, color(i)]));
  const finals = new Map<string, Array<[number, number]>>();
  for (const s of series) {
    if (s.points.length === 0) continue;
    const list = finals.get(s.label) ?? [];
    list.push([s.d, s.points[s.points.length - 1].value]);
    finals.set(s.label, list);
  }
  const allD = series.map((s) => s.d);
  const allV = [...finals.values()].flat().map(([, v]) => v);
  const x0 = 70;
  const frame = {
    x: x0,
    y: 40,
    width: 320,
    height: 240,
    title: "ESS per evaluation vs dimension",
    xScale: logScale(Math.min(...allD), Math.max(...allD), x0, x0 + 320),
    yScale: logScale(Math.max(Math.min(...allV), 1e-12), Math.max(...allV), 280, 40),
    xLabel: "dimension",
    yLabel: "ESS per model evaluation",
  };
  const body: string[] = [panelChrome(frame)];
  for (const label of labels) {
    const pts = (finals.get(label) ?? [])
      .sort((a, b) => a[0] - b[0])
      .map(([d, v]) => [frame.xScale(d), frame.yScale(v)] as [number, number]);
    const c = colorOf.get(label)!;
    body.push(polyline(pts, c), circleMarkers(pts, c));
  }
  body.push(
    legend(
      labels.map((l) => ({ label: l, color: colorOf.get(l)! })),
      x0 + 336,
      60,
    ),
  );
  return svgDocument(x0 + 320 + 170, 330, body.join("\n"));
}
