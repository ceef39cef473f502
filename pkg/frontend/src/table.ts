/** Counterfactual diff table.
 *
 * A cell is highlighted exactly when the server listed its feature in
 * that row's changed_features; the client applies no threshold of its
 * own, so highlighting always matches the service's change semantics.
 */

import type { Counterfactual, FeatureValue, SchemaResponse } from "./api.js";

export interface TableCell {
  feature: string;
  value: FeatureValue | null;
  changed: boolean;
}

export interface TableRow {
  cells: TableCell[];
  valid: boolean | null;
  classProb: number | null;
  proximity: number | null;
  score: number | null;
  explanation?: string;
}

export interface TableModel {
  featureNames: string[];
  factual: Record<string, FeatureValue>;
  rows: TableRow[];
}

export function buildTableModel(
  schema: SchemaResponse,
  factual: Record<string, FeatureValue>,
  counterfactuals: Counterfactual[],
): TableModel {
  const featureNames = schema.features.map((f) => f.name);
  const rows = counterfactuals.map((cf) => ({
    cells: featureNames.map((name) => ({
      feature: name,
      value: cf.features[name] ?? null,
      changed: cf.changed_features.includes(name),
    })),
    valid: cf.valid,
    classProb: cf.class_prob,
    proximity: cf.proximity_num,
    score: cf.score,
    ...(cf.explanation ? { explanation: cf.explanation } : {}),
  }));
  return { featureNames, factual, rows };
}

/** Fraction of rows whose given feature is highlighted. */
export function highlightRate(model: TableModel, feature: string): number {
  if (model.rows.length === 0) return 0;
  let changed = 0;
  for (const row of model.rows) {
    const cell = row.cells.find((c) => c.feature === feature);
    if (cell?.changed) changed += 1;
  }
  return changed / model.rows.length;
}

/** Count of highlighted continuous cells across the whole table. */
export function highlightedContinuousCount(
  model: TableModel,
  schema: SchemaResponse,
): number {
  const continuous = new Set(
    schema.features.filter((f) => f.kind === "continuous").map((f) => f.name),
  );
  let count = 0;
  for (const row of model.rows) {
    for (const cell of row.cells) {
      if (cell.changed && continuous.has(cell.feature)) count += 1;
    }
  }
  return count;
}

function formatValue(value: FeatureValue | null): string {
  if (value === null) return "—";
  if (typeof value === "number") {
    return Number.isInteger(value) ? String(value) : value.toFixed(3);
  }
  return value;
}

export function renderTable(
  doc: Document,
  container: HTMLElement,
  model: TableModel,
): void {
  container.textContent = "";
  const table = doc.createElement("table");
  table.className = "cf-table";

  const thead = doc.createElement("thead");
  const headRow = doc.createElement("tr");
  for (const text of ["#", ...model.featureNames, "valid", "p(target)", "proximity", "score"]) {
    const th = doc.createElement("th");
    th.textContent = text;
    headRow.appendChild(th);
  }
  thead.appendChild(headRow);
  table.appendChild(thead);

  const tbody = doc.createElement("tbody");

  const factualRow = doc.createElement("tr");
  factualRow.className = "factual-row";
  appendCell(doc, factualRow, "x", "td");
  for (const name of model.featureNames) {
    appendCell(doc, factualRow, formatValue(model.factual[name] ?? null), "td");
  }
  for (let i = 0; i < 4; i++) appendCell(doc, factualRow, "", "td");
  tbody.appendChild(factualRow);

  model.rows.forEach((row, index) => {
    const tr = doc.createElement("tr");
    if (row.valid === false) tr.className = "invalid-row";
    appendCell(doc, tr, String(index + 1), "td");
    for (const cell of row.cells) {
      const td = doc.createElement("td");
      td.textContent = formatValue(cell.value);
      if (cell.changed) td.className = "changed";
      tr.appendChild(td);
    }
    appendCell(doc, tr, row.valid === null ? "—" : row.valid ? "yes" : "no", "td");
    appendCell(doc, tr, row.classProb === null ? "—" : row.classProb.toFixed(3), "td");
    appendCell(doc, tr, row.proximity === null ? "—" : row.proximity.toFixed(3), "td");
    appendCell(doc, tr, row.score === null ? "—" : row.score.toFixed(3), "td");
    if (row.explanation) tr.title = row.explanation;
    tbody.appendChild(tr);
  });

  table.appendChild(tbody);
  container.appendChild(table);
}

function appendCell(
  doc: Document,
  tr: HTMLTableRowElement,
  text: string,
  tag: "td" | "th",
): void {
  const cell = doc.createElement(tag);
  cell.textContent = text;
  tr.appendChild(cell);
}
