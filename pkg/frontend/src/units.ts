// Display-unit conversions. These live in the view layer only: payloads
// stay in engineering units (m/s, rad, hours, K) end to end and are
// converted at the moment they are drawn.

export const MPS_TO_KMH = 3.6;
export const RAD_TO_DEG = 180 / Math.PI;

export function kmh(v: number): number {
  return v * MPS_TO_KMH;
}

export function deg(rad: number): number {
  return rad * RAD_TO_DEG;
}

/** Compact numeric label: 4 significant digits, no trailing zeros, exponent form outside [1e-3, 1e5). */
export function fmt(x: number, digits = 4): string {
  if (!Number.isFinite(x)) return String(x);
  if (x === 0) return "0";
  const mag = Math.abs(x);
  if (mag >= 1e5 || mag < 1e-3) return x.toExponential(Math.max(digits - 1, 0));
  return String(Number(x.toPrecision(digits)));
}

/**
 * One-line rendering of a tuning vector. Log-scaled knobs (names starting
 * with "log") additionally show the linear value they encode.
 */
export function thetaLine(theta: Record<string, number>): string {
  return Object.entries(theta)
    .map(([name, value]) => {
      if (name.startsWith("log")) {
        const linearName = name.replace(/^log_?/, "");
        return `${name}=${fmt(value)} (${linearName}≈10^${fmt(value, 3)}=${fmt(Math.pow(10, value), 3)})`;
      }
      return `${name}=${fmt(value)}`;
    })
    .join(", ");
}
