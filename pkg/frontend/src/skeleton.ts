/**
 * Trajectory figure from a skeleton dump: the piecewise-linear sampler path
 * in the first two whitened coordinates over standard-normal density rings
 * (the Laplace approximation is N(0, I) in these coordinates).
 */
import { writeFileSync } from "fs";
import { SkeletonEvent } from "./csv.js";
import { escapeText, linearScale, svgDocument } from "./svg.js";

export interface SkeletonStyle {
  size?: number;
  stroke?: string;
  title?: string;
  showEvents?: boolean;
}

export function renderSkeleton(events: SkeletonEvent[], style: SkeletonStyle = {}): string {
  if (events.length < 1) {
    throw new Error("skeleton has no events");
  }
  if (events[0].xi.length < 2) {
    throw new Error("trajectory plots need at least two coordinates");
  }
  const size = style.size ?? 420;
  const margin = 44;
  const xs = events.map((e) => e.xi[0]);
  const ys = events.map((e) => e.xi[1]);
  const span = Math.max(3.2, ...xs.map(Math.abs), ...ys.map(Math.abs)) * 1.1;
  const sx = linearScale(-span, span, margin, size - margin);
  const sy = linearScale(-span, span, size - margin, margin);

  const body: string[] = [];
  body.push(
    `<rect x="${margin}" y="${margin}" width="${size - 2 * margin}" height="${size - 2 * margin}" fill="white" stroke="#333"/>`,
  );
  // standard-normal contours: circles at 1, 2, 3 standard deviations
  for (const r of [1, 2, 3]) {
    const rp = Math.abs(sx(r) - sx(0));
    body.push(
      `<circle cx="${sx(0).toFixed(1)}" cy="${sy(0).toFixed(1)}" r="${rp.toFixed(1)}" fill="none" stroke="#bbb" stroke-dasharray="3,3"/>`,
    );
  }
  const pts = events.map(
    (e) => `${sx(e.xi[0]).toFixed(2)},${sy(e.xi[1]).toFixed(2)}`,
  );
  body.push(
    `<polyline points="${pts.join(" ")}" fill="none" stroke="${style.stroke ?? "#1f77b4"}" stroke-width="1.2"/>`,
  );
  if (style.showEvents ?? true) {
    for (const e of events) {
      const fill = e.kind === "refresh" ? "#d62728" : e.kind === "initial" ? "#000" : "#1f77b4";
      body.push(
        `<circle cx="${sx(e.xi[0]).toFixed(2)}" cy="${sy(e.xi[1]).toFixed(2)}" r="1.6" fill="${fill}"/>`,
      );
    }
  }
  body.push(
    `<text x="${size / 2}" y="${size - 8}" font-size="10" text-anchor="middle">xi_1</text>`,
    `<text x="14" y="${size / 2}" font-size="10" text-anchor="middle" transform="rotate(-90 14 ${size / 2})">xi_2</text>`,
  );
  if (style.title) {
    body.push(
      `<text x="${size / 2}" y="24" font-size="12" text-anchor="middle" font-weight="bold">${escapeText(style.title)}</text>`,
    );
  }
  return svgDocument(size, size, body.join("\n"));
}

export function writeSkeleton(events: SkeletonEvent[], style: SkeletonStyle, out: string) {
  writeFileSync(out, renderSkeleton(events, style));
}

/** Per-segment slopes in the (xi_1, xi_2) plane; zig-zag paths are +-1 diagonal. */
export function segmentSlopes(events: SkeletonEvent[]): number[] {
  const slopes: number[] = [];
  for (let i = 1; i < events.length; i++) {
    const dx = events[i].xi[0] - events[i - 1].xi[0];
    const dy = events[i].xi[1] - events[i - 1].xi[1];
    if (Math.abs(dx) > 1e-12) slopes.push(dy / dx);
  }
  return slopes;
}
