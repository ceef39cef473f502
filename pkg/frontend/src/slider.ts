/** Log-uniform mapping between slider position and the sparsity exponent.
 * The conditioner embeds log(p), so equal slider steps should cover equal
 * log-space intervals. */

export const P_MIN = 0.01;
export const P_MAX = 2.0;

/** Slider position t in [0, 1] to exponent p in [P_MIN, P_MAX]. */
export function pFromSlider(t: number): number {
  const clamped = Math.min(1, Math.max(0, t));
  const logp = Math.log(P_MIN) + clamped * (Math.log(P_MAX) - Math.log(P_MIN));
  return Math.exp(logp);
}

/** Exponent p back to slider position in [0, 1]. */
export function sliderFromP(p: number): number {
  const clamped = Math.min(P_MAX, Math.max(P_MIN, p));
  return (Math.log(clamped) - Math.log(P_MIN)) / (Math.log(P_MAX) - Math.log(P_MIN));
}

/** Short display form: 3 significant digits, no exponent notation. */
export function formatP(p: number): string {
  return p >= 1 ? p.toFixed(2) : p.toPrecision(3);
}
