/**
 * Minimal DOM-based visualizations: density heatmaps, trip-matrix heatmaps,
 * and distance histograms. Side-by-side pairs share one color or height
 * scale so the real and synthetic panels are directly comparable.
 */

export function matrixMax(...matrices: number[][][]): number {
  let max = 0;
  for (const matrix of matrices) {
    for (const row of matrix) {
      for (const value of row) {
        if (value > max) {
          max = value;
        }
      }
    }
  }
  return max;
}

/** White-to-blue ramp; `max` is the shared scale across both panels. */
export function heatColor(value: number, max: number): string {
  const t = max > 0 ? Math.min(value / max, 1) : 0;
  const channel = Math.round(255 - t * 200);
  return `rgb(${channel}, ${channel}, 255)`;
}

export function renderHeatmap(matrix: number[][], max: number, label: string): HTMLElement {
  const wrapper = document.createElement("figure");
  wrapper.className = "heatmap";
  const grid = document.createElement("div");
  grid.className = "heatmap-grid";
  grid.style.display = "grid";
  grid.style.gridTemplateColumns = `repeat(${matrix[0]?.length ?? 0}, 1fr)`;
  // Row 0 holds the lowest y band; render top-down.
  for (let r = matrix.length - 1; r >= 0; r -= 1) {
    for (const value of matrix[r]) {
      const cell = document.createElement("div");
      cell.className = "heatmap-cell";
      cell.style.backgroundColor = heatColor(value, max);
      cell.title = String(value);
      cell.dataset.value = String(value);
      grid.appendChild(cell);
    }
  }
  const caption = document.createElement("figcaption");
  caption.textContent = label;
  wrapper.append(grid, caption);
  return wrapper;
}

export function renderHistogram(values: number[], max: number, label: string): HTMLElement {
  const wrapper = document.createElement("figure");
  wrapper.className = "histogram";
  const bars = document.createElement("div");
  bars.className = "histogram-bars";
  for (const value of values) {
    const bar = document.createElement("div");
    bar.className = "histogram-bar";
    const height = max > 0 ? Math.round((value / max) * 100) : 0;
    bar.style.height = `${height}%`;
    bar.title = String(value);
    bar.dataset.value = String(value);
    bars.appendChild(bar);
  }
  const caption = document.createElement("figcaption");
  caption.textContent = label;
  wrapper.append(bars, caption);
  return wrapper;
}

export function renderSideBySide(
  container: HTMLElement,
  left: HTMLElement,
  right: HTMLElement,
): void {
  const row = document.createElement("div");
  row.className = "side-by-side";
  row.append(left, right);
  container.innerHTML = "";
  container.appendChild(row);
}
