/** Minimal SVG chart primitives: scales, axes, polylines, legends. */

export interface Scale {
  (v: number): number;
  ticks: number[];
}

const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
  "#7f7f7f",
];

export function color(i: number): string {
  return PALETTE[i % PALETTE.length];
}

export function logScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const safeLo = Math.max(lo, 1e-300);
  const safeHi = Math.max(hi, safeLo * 10);
  const a = Math.log10(safeLo);
  const b = Math.log10(safeHi);
  const scale = ((v: number) =>
    outLo + ((Math.log10(Math.max(v, 1e-300)) - a) / (b - a)) * (outHi - outLo)) as Scale;
  const ticks: number[] = [];
  for (let p = Math.ceil(a); p <= Math.floor(b); p++) ticks.push(10 ** p);
  if (ticks.length === 0) ticks.push(safeLo, safeHi);
  scale.ticks = ticks;
  return scale;
}

export function linearScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const span = hi - lo || 1;
  const scale = ((v: number) => outLo + ((v - lo) / span) * (outHi - outLo)) as Scale;
  const step = 10 ** Math.floor(Math.log10(span)) / 2;
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12; t += step) ticks.push(t);
  scale.ticks = ticks;
  return scale;
}

export function escapeText(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function fmtTick(v: number): string {
  if (v === 0) return "0";
  const exp = Math.log10(Math.abs(v));
  if (Number.isInteger(exp) && (exp < -2 || exp > 3)) return `1e${exp}`;
  if (Math.abs(v) >= 1000 || Math.abs(v) < 0.01) return v.toExponential(0);
  return `${Number(v.toFixed(3))}`;
}

export function polyline(
  pts: Array<[number, number]>,
  stroke: string,
  width = 1.5,
  dash?: string,
): string {
  if (pts.length === 0) return "";
  const d = pts.map(([x, y]) => `${x.toFixed(2)},${y.toFixed(2)}`).join(" ");
  const dashAttr = dash ? ` stroke-dasharray="${dash}"` : "";
  return `<polyline points="${d}" fill="none" stroke="${stroke}" stroke-width="${width}"${dashAttr}/>`;
}

export function circleMarkers(
  pts: Array<[number, number]>,
  fill: string,
  r = 2.4,
): string {
  return pts
    .map(([x, y]) => `<circle cx="${x.toFixed(2)}" cy="${y.toFixed(2)}" r="${r}" fill="${fill}"/>`)
    .join("");
}

export interface PanelFrame {
  x: number;
  y: number;
  width: number;
  height: number;
  title: string;
  xScale: Scale;
  yScale: Scale;
  xLabel: string;
  yLabel: string;
}

/** Frame, gridlines, tick labels, and title for one panel. */
export function panelChrome(f: PanelFrame): string {
  const parts: string[] = [];
  parts.push(
    `<rect x="${f.x}" y="${f.y}" width="${f.width}" height="${f.height}" fill="white" stroke="#333" stroke-width="1"/>`,
  );
  for (const t of f.xScale.ticks) {
    const px = f.xScale(t);
    if (px < f.x - 0.5 || px > f.x + f.width + 0.5) continue;
    parts.push(
      `<line x1="${px.toFixed(1)}" y1="${f.y}" x2="${px.toFixed(1)}" y2="${f.y + f.height}" stroke="#ddd" stroke-width="0.5"/>`,
      `<text x="${px.toFixed(1)}" y="${f.y + f.height + 14}" font-size="9" text-anchor="middle">${fmtTick(t)}</text>`,
    );
  }
  for (const t of f.yScale.ticks) {
    const py = f.yScale(t);
    if (py < f.y - 0.5 || py > f.y + f.height + 0.5) continue;
    parts.push(
      `<line x1="${f.x}" y1="${py.toFixed(1)}" x2="${f.x + f.width}" y2="${py.toFixed(1)}" stroke="#ddd" stroke-width="0.5"/>`,
      `<text x="${f.x - 4}" y="${(py + 3).toFixed(1)}" font-size="9" text-anchor="end">${fmtTick(t)}</text>`,
    );
  }
  parts.push(
    `<text x="${f.x + f.width / 2}" y="${f.y - 6}" font-size="11" text-anchor="middle" font-weight="bold">${escapeText(f.title)}</text>`,
    `<text x="${f.x + f.width / 2}" y="${f.y + f.height + 28}" font-size="10" text-anchor="middle">${escapeText(f.xLabel)}</text>`,
    `<text x="${f.x - 40}" y="${f.y + f.height / 2}" font-size="10" text-anchor="middle" transform="rotate(-90 ${f.x - 40} ${f.y + f.height / 2})">${escapeText(f.yLabel)}</text>`,
  );
  return parts.join("\n");
}

export function legend(
  entries: Array<{ label: string; color: string }>,
  x: number,
  y: number,
): string {
  return entries
    .map(
      (e, i) =>
        `<line x1="${x}" y1="${y + i * 14}" x2="${x + 18}" y2="${y + i * 14}" stroke="${e.color}" stroke-width="2"/>` +
        `<text x="${x + 24}" y="${y + i * 14 + 3}" font-size="10">${escapeText(e.label)}</text>`,
    )
    .join("\n");
}

export function svgDocument(width: number, height: number, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">\n` +
    `<rect width="${width}" height="${height}" fill="white"/>\n${body}\n</svg>\n`
  );
}
