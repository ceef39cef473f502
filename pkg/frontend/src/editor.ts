/** Schema-driven instance editor: validation mirrors the server's rules.
 *
 * Hard failures (block submission): missing value, non-numeric text in a
 * continuous field, a category outside the schema's list. Soft warning
 * (submits anyway): numeric value outside the observed [min, max] range,
 * since ranges describe the training data rather than constrain queries.
 */

import type { Feature, FeatureValue, SchemaResponse } from "./api.js";

export interface ValidationResult {
  /** Parsed values, present only when there are no errors. */
  values: Record<string, FeatureValue> | null;
  errors: Record<string, string>;
  warnings: Record<string, string>;
}

export function validateDraft(
  schema: SchemaResponse,
  draft: Record<string, string>,
): ValidationResult {
  const values: Record<string, FeatureValue> = {};
  const errors: Record<string, string> = {};
  const warnings: Record<string, string> = {};

  for (const feature of schema.features) {
    const raw = (draft[feature.name] ?? "").trim();
    if (raw === "") {
      errors[feature.name] = "required";
      continue;
    }
    if (feature.kind === "continuous") {
      const num = Number(raw);
      if (!Number.isFinite(num)) {
        errors[feature.name] = "must be a number";
        continue;
      }
      if (num < feature.min || num > feature.max) {
        warnings[feature.name] =
          `outside the observed range [${feature.min}, ${feature.max}]`;
      }
      values[feature.name] = num;
    } else {
      if (!feature.categories.includes(raw)) {
        errors[feature.name] = `unknown category; expected one of ${feature.categories.join(", ")}`;
        continue;
      }
      values[feature.name] = raw;
    }
  }

  const ok = Object.keys(errors).length === 0;
  return { values: ok ? values : null, errors, warnings };
}

/** Sensible starting draft: means for continuous, first category otherwise. */
export function defaultDraft(schema: SchemaResponse): Record<string, string> {
  const draft: Record<string, string> = {};
  for (const feature of schema.features) {
    draft[feature.name] =
      feature.kind === "continuous"
        ? String(roundForDisplay(feature.mean))
        : (feature.categories[0] ?? "");
  }
  return draft;
}

function roundForDisplay(value: number): number {
  return Math.round(value * 100) / 100;
}

/** Build the editor's DOM. The caller wires the change handler to
 * revalidate and re-enable submission. */
export function renderEditor(
  doc: Document,
  container: HTMLElement,
  schema: SchemaResponse,
  draft: Record<string, string>,
  result: ValidationResult,
  onChange: (feature: string, value: string) => void,
): void {
  container.textContent = "";
  for (const feature of schema.features) {
    const row = doc.createElement("div");
    row.className = "editor-row";

    const label = doc.createElement("label");
    label.textContent = feature.name;
    label.htmlFor = `edit-${feature.name}`;
    row.appendChild(label);

    const input = buildInput(doc, feature, draft[feature.name] ?? "");
    input.id = `edit-${feature.name}`;
    input.addEventListener("change", () => onChange(feature.name, input.value));
    input.addEventListener("input", () => onChange(feature.name, input.value));
    row.appendChild(input);

    if (feature.kind === "continuous") {
      const hint = doc.createElement("span");
      hint.className = "range-hint";
      hint.textContent = `[${feature.min}, ${feature.max}]`;
      row.appendChild(hint);
    }

    const error = result.errors[feature.name];
    const warning = result.warnings[feature.name];
    if (error) {
      const msg = doc.createElement("span");
      msg.className = "field-error";
      msg.textContent = error;
      row.appendChild(msg);
    } else if (warning) {
      const msg = doc.createElement("span");
      msg.className = "field-warning";
      msg.textContent = warning;
      row.appendChild(msg);
    }
    container.appendChild(row);
  }
}

function buildInput(
  doc: Document,
  feature: Feature,
  value: string,
): HTMLInputElement | HTMLSelectElement {
  if (feature.kind === "continuous") {
    const input = doc.createElement("input");
    input.type = "text";
    input.inputMode = "decimal";
    input.value = value;
    return input;
  }
  const select = doc.createElement("select");
  for (const category of feature.categories) {
    const option = doc.createElement("option");
    option.value = category;
    option.textContent = category;
    option.selected = category === value;
    select.appendChild(option);
  }
  return select;
}
