/** Application wiring: builds the page skeleton, connects the editor,
 * slider, lock toggles, and result views to the HTTP client, and guards
 * against stale responses. All counterfactual math happens server-side. */

import { ApiClient, ApiError } from "./api.js";
import type { GenerateRequest, SchemaResponse } from "./api.js";
import { defaultDraft, renderEditor, validateDraft } from "./editor.js";
import type { ValidationResult } from "./editor.js";
import { buildScatterModel, continuousFeatureNames, renderScatter, scatterAvailable } from "./scatter.js";
import { formatP, pFromSlider, sliderFromP } from "./slider.js";
import { RequestGate, applyResponse, initialState, nextSeed, toggleLock } from "./state.js";
import type { SessionState } from "./state.js";
import { buildTableModel, renderTable } from "./table.js";

/** Reads the server base URL from a global set before the script loads,
 * falling back to a meta tag, then to the serving origin. */
export function resolveBaseUrl(doc: Document): string {
  const fromGlobal = (globalThis as { FLOWCF_BASE_URL?: unknown }).FLOWCF_BASE_URL;
  if (typeof fromGlobal === "string") return fromGlobal.trim();
  const meta = doc.querySelector('meta[name="flowcf-base-url"]');
  return (meta?.getAttribute("content") ?? "").trim();
}

interface Mounted {
  status: HTMLElement;
  editor: HTMLElement;
  locks: HTMLElement;
  pSlider: HTMLInputElement;
  pValue: HTMLElement;
  nInput: HTMLInputElement;
  targetSelect: HTMLSelectElement;
  seedInput: HTMLInputElement;
  pinSeed: HTMLInputElement;
  generate: HTMLButtonElement;
  errorBox: HTMLElement;
  summary: HTMLElement;
  table: HTMLElement;
  axisControls: HTMLElement;
  xAxis: HTMLSelectElement;
  yAxis: HTMLSelectElement;
  swapAxes: HTMLButtonElement;
  scatter: HTMLElement;
}

export class App {
  readonly doc: Document;
  readonly client: ApiClient;
  readonly state: SessionState;
  readonly gate: RequestGate;
  private els!: Mounted;
  private validation: ValidationResult = { values: null, errors: {}, warnings: {} };
  private xFeature: string | null = null;
  private yFeature: string | null = null;

  constructor(doc: Document, client: ApiClient) {
    this.doc = doc;
    this.client = client;
    this.state = initialState();
    this.gate = new RequestGate();
  }

  /** Builds the static skeleton into `root` and fetches the schema. */
  async start(root: HTMLElement): Promise<void> {
    this.mount(root);
    this.els.status.textContent = "loading schema...";
    try {
      const schema = await this.client.schema();
      this.applySchema(schema);
    } catch (err) {
      this.els.status.textContent = "";
      this.showError(err);
    }
  }

  private mount(root: HTMLElement): void {
    const d = this.doc;
    root.textContent = "";

    const make = <K extends keyof HTMLElementTagNameMap>(
      tag: K,
      parent: HTMLElement,
      cls?: string,
      id?: string,
    ): HTMLElementTagNameMap[K] => {
      const el = d.createElement(tag);
      if (cls) el.className = cls;
      if (id) el.id = id;
      parent.appendChild(el);
      return el;
    };

    const header = make("header", root);
    make("h1", header).textContent = "Counterfactual explorer";
    const status = make("p", header, "status", "status");

    const editorSection = make("section", root, "panel", "editor-panel");
    make("h2", editorSection).textContent = "Instance";
    const editor = make("div", editorSection, undefined, "editor");

    const lockSection = make("section", root, "panel", "lock-panel");
    make("h2", lockSection).textContent = "Locked features";
    make("p", lockSection, "hint").textContent =
      "Locked features are held close to their current values.";
    const locks = make("div", lockSection, undefined, "locks");

    const controls = make("section", root, "panel", "controls");
    make("h2", controls).textContent = "Generation";

    const pRow = make("div", controls, "control-row");
    const pLabel = make("label", pRow);
    pLabel.textContent = "Sparsity exponent p ";
    pLabel.htmlFor = "p-slider";
    const pSlider = make("input", pRow, undefined, "p-slider");
    pSlider.type = "range";
    pSlider.min = "0";
    pSlider.max = "1";
    pSlider.step = "0.001";
    const pValue = make("span", pRow, "p-value", "p-value");

    const nRow = make("div", controls, "control-row");
    const nLabel = make("label", nRow);
    nLabel.textContent = "Counterfactuals per request ";
    nLabel.htmlFor = "n-input";
    const nInput = make("input", nRow, undefined, "n-input");
    nInput.type = "number";
    nInput.min = "1";
    nInput.max = "1000";

    const targetRow = make("div", controls, "control-row");
    const targetLabel = make("label", targetRow);
    targetLabel.textContent = "Target class ";
    targetLabel.htmlFor = "target-select";
    const targetSelect = make("select", targetRow, undefined, "target-select");

    const seedRow = make("div", controls, "control-row");
    const seedLabel = make("label", seedRow);
    seedLabel.textContent = "Seed ";
    seedLabel.htmlFor = "seed-input";
    const seedInput = make("input", seedRow, undefined, "seed-input");
    seedInput.type = "number";
    const pinLabel = make("label", seedRow, "pin-label");
    const pinSeed = make("input", pinLabel, undefined, "pin-seed");
    pinSeed.type = "checkbox";
    pinLabel.appendChild(d.createTextNode(" pin seed"));

    const generate = make("button", controls, "generate", "generate");
    generate.textContent = "Generate";
    const errorBox = make("div", controls, "error-box", "error-box");

    const results = make("section", root, "panel", "results");
    make("h2", results).textContent = "Counterfactuals";
    const summary = make("p", results, "summary", "summary");
    const table = make("div", results, undefined, "table");

    const axisControls = make("div", results, "axis-controls", "axis-controls");
    const xLabel = make("label", axisControls);
    xLabel.textContent = "x ";
    xLabel.htmlFor = "x-axis";
    const xAxis = make("select", axisControls, undefined, "x-axis");
    const yLabel = make("label", axisControls);
    yLabel.textContent = "y ";
    yLabel.htmlFor = "y-axis";
    const yAxis = make("select", axisControls, undefined, "y-axis");
    const swapAxes = make("button", axisControls, undefined, "swap-axes");
    swapAxes.textContent = "Swap axes";
    const scatter = make("div", results, undefined, "scatter");

    this.els = {
      status, editor, locks, pSlider, pValue, nInput, targetSelect,
      seedInput, pinSeed, generate, errorBox, summary, table,
      axisControls, xAxis, yAxis, swapAxes, scatter,
    };

    pSlider.addEventListener("input", () => {
      this.state.p = pFromSlider(Number(pSlider.value));
      pValue.textContent = formatP(this.state.p);
    });
    nInput.addEventListener("change", () => {
      const v = Number(nInput.value);
      if (Number.isFinite(v) && v >= 1) this.state.n = Math.floor(v);
    });
    targetSelect.addEventListener("change", () => {
      const v = targetSelect.value;
      this.state.targetClass = v === "flip" ? "flip" : Number(v);
    });
    seedInput.addEventListener("change", () => {
      const v = Number(seedInput.value);
      if (Number.isFinite(v)) this.state.seed = Math.floor(v);
    });
    pinSeed.addEventListener("change", () => {
      this.state.pinSeed = pinSeed.checked;
    });
    generate.addEventListener("click", () => {
      void this.generate();
    });
    xAxis.addEventListener("change", () => {
      this.xFeature = xAxis.value;
      this.renderScatterView();
    });
    yAxis.addEventListener("change", () => {
      this.yFeature = yAxis.value;
      this.renderScatterView();
    });
    swapAxes.addEventListener("click", () => {
      this.swapAxes();
    });
  }

  applySchema(schema: SchemaResponse): void {
    this.state.schema = schema;
    this.state.draft = defaultDraft(schema);
    const trained = schema.p_set;
    this.state.p = trained.length > 0 ? trained[trained.length - 1]! : 2.0;

    this.els.status.textContent =
      `bundle ${schema.bundle_id} | ${schema.features.length} features | ` +
      `${schema.class_count} classes${schema.has_classifier ? "" : " | no classifier"}`;

    const d = this.doc;
    this.els.targetSelect.textContent = "";
    const flip = d.createElement("option");
    flip.value = "flip";
    flip.textContent = "flip (most likely other class)";
    this.els.targetSelect.appendChild(flip);
    for (let c = 0; c < schema.class_count; c += 1) {
      const opt = d.createElement("option");
      opt.value = String(c);
      opt.textContent = schema.class_labels ? `${c}: ${schema.class_labels[c]}` : String(c);
      this.els.targetSelect.appendChild(opt);
    }
    this.els.targetSelect.value = "flip";

    this.els.locks.textContent = "";
    for (const feature of schema.features) {
      const label = d.createElement("label");
      label.className = "lock-item";
      const box = d.createElement("input");
      box.type = "checkbox";
      box.dataset.feature = feature.name;
      box.addEventListener("change", () => {
        toggleLock(this.state, feature.name);
      });
      label.appendChild(box);
      label.appendChild(d.createTextNode(` ${feature.name}`));
      this.els.locks.appendChild(label);
    }

    this.els.pSlider.value = String(sliderFromP(this.state.p));
    this.els.pValue.textContent = formatP(this.state.p);
    this.els.nInput.value = String(this.state.n);
    this.els.seedInput.value = String(this.state.seed);
    this.els.pinSeed.checked = this.state.pinSeed;

    const cont = continuousFeatureNames(schema);
    this.xFeature = cont[0] ?? null;
    this.yFeature = cont[1] ?? null;
    for (const select of [this.els.xAxis, this.els.yAxis]) {
      select.textContent = "";
      for (const name of cont) {
        const opt = d.createElement("option");
        opt.value = name;
        opt.textContent = name;
        select.appendChild(opt);
      }
    }
    if (this.xFeature) this.els.xAxis.value = this.xFeature;
    if (this.yFeature) this.els.yAxis.value = this.yFeature;
    this.els.axisControls.hidden = !scatterAvailable(schema);

    this.revalidate();
    this.renderScatterView();
  }

  onFieldChange(feature: string, value: string): void {
    this.state.draft[feature] = value;
    this.revalidate();
  }

  private revalidate(): void {
    const schema = this.state.schema;
    if (!schema) return;
    this.validation = validateDraft(schema, this.state.draft);
    renderEditor(this.doc, this.els.editor, schema, this.state.draft, this.validation,
      (feature, value) => this.onFieldChange(feature, value));
    this.els.generate.disabled = this.validation.values === null;
  }

  /** Issues a generate call; stale responses are dropped by ticket. */
  async generate(): Promise<void> {
    const schema = this.state.schema;
    if (!schema || this.validation.values === null) return;
    const factual = this.validation.values;
    const request: GenerateRequest = {
      instance: factual,
      n: this.state.n,
      p: this.state.p,
      target_class: this.state.targetClass,
      mask: [...this.state.locks].sort(),
      seed: nextSeed(this.state),
    };
    this.els.seedInput.value = String(this.state.seed);
    const ticket = this.gate.issue();
    this.els.errorBox.textContent = "";
    this.els.generate.disabled = true;
    try {
      const response = await this.client.generate(request);
      if (applyResponse(this.state, this.gate, ticket, response, factual)) {
        this.renderResults();
      }
    } catch (err) {
      if (this.gate.isCurrent(ticket)) this.showError(err);
    } finally {
      this.els.generate.disabled = this.validation.values === null;
    }
  }

  private swapAxes(): void {
    const x = this.xFeature;
    this.xFeature = this.yFeature;
    this.yFeature = x;
    if (this.xFeature) this.els.xAxis.value = this.xFeature;
    if (this.yFeature) this.els.yAxis.value = this.yFeature;
    this.renderScatterView();
  }

  private renderResults(): void {
    const { schema, response, factual } = this.state;
    if (!schema || !response || !factual) return;
    const valid = response.counterfactuals.filter((c) => c.valid === true).length;
    const judged = response.counterfactuals.some((c) => c.valid !== null);
    this.els.summary.textContent =
      `target ${response.target_label} | ${response.counterfactuals.length} samples` +
      (judged ? ` | ${valid} valid` : "") +
      ` | ${response.timing_ms.toFixed(1)} ms`;
    const model = buildTableModel(schema, factual, response.counterfactuals);
    renderTable(this.doc, this.els.table, model);
    this.renderScatterView();
  }

  /** Scatter re-renders from the stored response; no network involved. */
  private renderScatterView(): void {
    const { schema, response, factual } = this.state;
    if (!schema) return;
    if (!scatterAvailable(schema)) {
      renderScatter(this.doc, this.els.scatter, null);
      return;
    }
    if (!response || !factual || !this.xFeature || !this.yFeature) {
      this.els.scatter.textContent = "";
      return;
    }
    const model = buildScatterModel(
      schema, factual, response.counterfactuals, this.xFeature, this.yFeature);
    renderScatter(this.doc, this.els.scatter, model);
  }

  private showError(err: unknown): void {
    if (err instanceof ApiError) {
      this.els.errorBox.textContent = `request failed (${err.status}): ${err.message}`;
    } else {
      this.els.errorBox.textContent = `request failed: ${String(err)}`;
    }
  }
}

function bootstrap(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const app = new App(document, new ApiClient(resolveBaseUrl(document)));
  void app.start(root);
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  bootstrap();
}
