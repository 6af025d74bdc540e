/** Display formatting only; underlying values are never altered. */

export const ABSENT = "—"; // em dash shown for absent cells

/** Exact milli-unit rendering: 400000 -> "400.000" (no float math). */
export function millisToCurrency(millis: number): string {
  const sign = millis < 0 ? "-" : "";
  const magnitude = Math.abs(millis);
  const whole = Math.floor(magnitude / 1000);
  const frac = (magnitude % 1000).toString().padStart(3, "0");
  return `${sign}${whole}.${frac}`;
}

export function formatMeasure(measure: string, value: number | null): string {
  if (value === null || value === undefined) return ABSENT;
  if (measure === "sum_cost") return millisToCurrency(value);
  if (measure === "avg_cost") return (value / 1000).toFixed(3);
  if (measure.endsWith("_rate")) return value.toFixed(6);
  if (measure === "avg_value") return value.toFixed(3);
  return String(value);
}

export function memberLabel(level: string, value: string | number): string {
  if (level === "quarter") return `Q${value}`;
  if (level === "month") return String(value).padStart(2, "0");
  return String(value);
}
