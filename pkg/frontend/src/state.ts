/** Session state and the stale-response guard.
 *
 * Requests are numbered by a monotonic counter; a response may only be
 * applied while its ticket is still the newest one issued. Out-of-order
 * arrivals from slower earlier requests are dropped, so the table always
 * reflects the most recent controls.
 */

import type { GenerateResponse, SchemaResponse } from "./api.js";

export class RequestGate {
  private counter = 0;

  /** Take a ticket for a request about to start. */
  issue(): number {
    this.counter += 1;
    return this.counter;
  }

  /** True when the ticket belongs to the newest issued request. */
  isCurrent(ticket: number): boolean {
    return ticket === this.counter;
  }
}

export interface SessionState {
  schema: SchemaResponse | null;
  /** Raw editor text per feature; parsed/validated before submission. */
  draft: Record<string, string>;
  p: number;
  locks: Set<string>;
  n: number;
  targetClass: number | "flip";
  seed: number;
  pinSeed: boolean;
  response: GenerateResponse | null;
  /** Instance snapshot the current response was generated for. */
  factual: Record<string, number | string> | null;
}

export function initialState(): SessionState {
  return {
    schema: null,
    draft: {},
    p: 2.0,
    locks: new Set(),
    n: 10,
    targetClass: "flip",
    seed: 0,
    pinSeed: true,
    response: null,
    factual: null,
  };
}

/** Seed to send: pinned seeds repeat exactly, otherwise roll a fresh one. */
export function nextSeed(state: SessionState): number {
  if (state.pinSeed) return state.seed;
  state.seed = Math.floor(Math.random() * 2 ** 31);
  return state.seed;
}

export function toggleLock(state: SessionState, feature: string): void {
  if (state.locks.has(feature)) state.locks.delete(feature);
  else state.locks.add(feature);
}

/** Apply a generate response only if its ticket is still current. */
export function applyResponse(
  state: SessionState,
  gate: RequestGate,
  ticket: number,
  response: GenerateResponse,
  factual: Record<string, number | string>,
): boolean {
  if (!gate.isCurrent(ticket)) return false;
  state.response = response;
  state.factual = factual;
  return true;
}
