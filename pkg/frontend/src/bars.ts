// Probability bar geometry, kept pure so the widths-proportional contract is
// testable without a DOM.

export interface BarSpec {
  label: string;
  fraction: number;
  /** width in percent of the track, rounded to 0.01 */
  widthPercent: number;
  valueText: string;
}

export function computeBars(probabilities: Record<string, number>): BarSpec[] {
  return Object.entries(probabilities).map(([label, fraction]) => ({
    label,
    fraction,
    widthPercent: Math.round(fraction * 10000) / 100,
    valueText: `${(fraction * 100).toFixed(1)}%`,
  }));
}

export function renderBars(root: HTMLElement, probabilities: Record<string, number>): void {
  root.innerHTML = "";
  for (const bar of computeBars(probabilities)) {
    const row = document.createElement("div");
    row.className = "bar-row";

    const label = document.createElement("span");
    label.className = "bar-label";
    label.textContent = bar.label;

    const track = document.createElement("div");
    track.className = "bar-track";
    const fill = document.createElement("div");
    fill.className = "bar-fill";
    fill.style.width = `${bar.widthPercent}%`;
    track.appendChild(fill);

    const value = document.createElement("span");
    value.className = "bar-value";
    value.textContent = bar.valueText;

    row.append(label, track, value);
    root.appendChild(row);
  }
}
