/** 2D SVG scatter of counterfactuals around the factual point.
 *
 * Axes are two user-chosen continuous features; the projection is plain
 * linear scaling of server-sourced values into the viewport. With fewer
 * than two continuous features the view reports itself unavailable.
 */

import type { Counterfactual, FeatureValue, SchemaResponse } from "./api.js";

export interface ScatterPoint {
  x: number;
  y: number;
  valid: boolean | null;
  factual: boolean;
}

export interface ScatterModel {
  xFeature: string;
  yFeature: string;
  points: ScatterPoint[];
  xRange: [number, number];
  yRange: [number, number];
}

export function continuousFeatureNames(schema: SchemaResponse): string[] {
  return schema.features.filter((f) => f.kind === "continuous").map((f) => f.name);
}

export function scatterAvailable(schema: SchemaResponse): boolean {
  return continuousFeatureNames(schema).length >= 2;
}

function numeric(value: FeatureValue | null | undefined): number | null {
  return typeof value === "number" && Number.isFinite(value) ? value : null;
}

export function buildScatterModel(
  schema: SchemaResponse,
  factual: Record<string, FeatureValue>,
  counterfactuals: Counterfactual[],
  xFeature: string,
  yFeature: string,
): ScatterModel | null {
  const names = continuousFeatureNames(schema);
  if (!names.includes(xFeature) || !names.includes(yFeature)) return null;

  const points: ScatterPoint[] = [];
  const fx = numeric(factual[xFeature]);
  const fy = numeric(factual[yFeature]);
  if (fx === null || fy === null) return null;
  points.push({ x: fx, y: fy, valid: null, factual: true });

  for (const cf of counterfactuals) {
    const x = numeric(cf.features[xFeature]);
    const y = numeric(cf.features[yFeature]);
    if (x === null || y === null) continue; // non-finite entries are flagged, not plotted
    points.push({ x, y, valid: cf.valid, factual: false });
  }

  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  return {
    xFeature,
    yFeature,
    points,
    xRange: padRange(Math.min(...xs), Math.max(...xs)),
    yRange: padRange(Math.min(...ys), Math.max(...ys)),
  };
}

function padRange(lo: number, hi: number): [number, number] {
  const span = hi - lo;
  const pad = span > 0 ? span * 0.08 : Math.max(1, Math.abs(lo)) * 0.08;
  return [lo - pad, hi + pad];
}

/** Data coordinates to viewport pixels (y flipped: SVG grows downward). */
export function project(
  model: ScatterModel,
  point: { x: number; y: number },
  width: number,
  height: number,
): { px: number; py: number } {
  const [x0, x1] = model.xRange;
  const [y0, y1] = model.yRange;
  return {
    px: ((point.x - x0) / (x1 - x0)) * width,
    py: height - ((point.y - y0) / (y1 - y0)) * height,
  };
}

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderScatter(
  doc: Document,
  container: HTMLElement,
  model: ScatterModel | null,
  width = 420,
  height = 320,
): void {
  container.textContent = "";
  if (model === null) {
    const notice = doc.createElement("p");
    notice.className = "scatter-notice";
    notice.textContent = "Scatter view needs at least two continuous features.";
    container.appendChild(notice);
    return;
  }

  const svg = doc.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "scatter");

  for (const point of model.points) {
    const { px, py } = project(model, point, width, height);
    const circle = doc.createElementNS(SVG_NS, "circle");
    circle.setAttribute("cx", px.toFixed(2));
    circle.setAttribute("cy", py.toFixed(2));
    if (point.factual) {
      circle.setAttribute("r", "7");
      circle.setAttribute("class", "point-factual");
    } else {
      circle.setAttribute("r", "5");
      circle.setAttribute(
        "class",
        point.valid === false ? "point-invalid" : "point-valid",
      );
    }
    svg.appendChild(circle);
  }

  const label = doc.createElementNS(SVG_NS, "text");
  label.setAttribute("x", "8");
  label.setAttribute("y", "16");
  label.setAttribute("class", "scatter-label");
  label.textContent = `${model.xFeature} vs ${model.yFeature}`;
  svg.appendChild(label);

  container.appendChild(svg);
}
