/** Before/after comparison: draggable reveal slider plus side-by-side
 * toggle, with the region of interest outlined on both. */

import { bboxToRect } from './overlay.js';
import type { MetricsDoc } from './types.js';

export class CompareView {
  private root: HTMLElement;
  private mode: 'slider' | 'side-by-side' = 'slider';
  private beforeUrl = '';
  private afterUrl = '';
  private metrics: MetricsDoc | null = null;

  constructor(root: HTMLElement) {
    this.root = root;
  }

  setImages(beforeUrl: string, afterUrl: string, metrics: MetricsDoc | null): void {
    this.beforeUrl = beforeUrl;
    this.afterUrl = afterUrl;
    this.metrics = metrics;
    this.render();
  }

  toggleMode(): void {
    this.mode = this.mode === 'slider' ? 'side-by-side' : 'slider';
    this.render();
  }

  private roiOverlay(viewW: number, viewH: number): HTMLElement | null {
    if (!this.metrics) return null;
    const rect = bboxToRect(this.metrics.roi.bbox, viewW, viewH);
    const div = document.createElement('div');
    div.className = 'roi-overlay';
    div.style.left = `${rect.left}px`;
    div.style.top = `${rect.top}px`;
    div.style.width = `${rect.width}px`;
    div.style.height = `${rect.height}px`;
    div.title = this.metrics.roi.derivation;
    return div;
  }

  private pane(url: string, label: string, size: number): HTMLElement {
    const pane = document.createElement('div');
    pane.className = 'compare-pane';
    pane.style.width = `${size}px`;
    pane.style.height = `${size}px`;
    const img = document.createElement('img');
    img.src = url;
    img.width = size;
    img.height = size;
    img.alt = label;
    pane.appendChild(img);
    const roi = this.roiOverlay(size, size);
    if (roi) pane.appendChild(roi);
    const tag = document.createElement('span');
    tag.className = 'pane-label';
    tag.textContent = label;
    pane.appendChild(tag);
    return pane;
  }

  private render(): void {
    this.root.innerHTML = '';
    if (!this.beforeUrl || !this.afterUrl) return;
    const size = 360;

    if (this.mode === 'side-by-side') {
      const row = document.createElement('div');
      row.className = 'compare-row';
      row.appendChild(this.pane(this.beforeUrl, 'before', size));
      row.appendChild(this.pane(this.afterUrl, 'after', size));
      this.root.appendChild(row);
      return;
    }

    const holder = document.createElement('div');
    holder.className = 'slider-holder';
    holder.style.width = `${size}px`;
    holder.style.height = `${size}px`;
    const before = this.pane(this.beforeUrl, 'before', size);
    const after = this.pane(this.afterUrl, 'after', size);
    after.classList.add('slider-top');
    after.style.clipPath = 'inset(0 50% 0 0)';
    holder.appendChild(before);
    holder.appendChild(after);

    const handle = document.createElement('input');
    handle.type = 'range';
    handle.min = '0';
    handle.max = '100';
    handle.value = '50';
    handle.className = 'slider-handle';
    handle.addEventListener('input', () => {
      after.style.clipPath = `inset(0 ${100 - Number(handle.value)}% 0 0)`;
    });

    this.root.appendChild(holder);
    this.root.appendChild(handle);
  }
}

export function metricsTable(metrics: MetricsDoc): HTMLTableElement {
  const table = document.createElement('table');
  table.className = 'metrics-table';
  const rows: [string, string][] = [
    ['MAE (all)', metrics.mae_all.toFixed(2)],
    ['SSIM (all)', metrics.ssim_all.toFixed(2)],
    ['MAE (RoI)', metrics.mae_roi.toFixed(2)],
    ['SSIM (RoI)', metrics.ssim_roi.toFixed(2)],
    ['resolution', String(metrics.resolution)],
  ];
  for (const [k, v] of rows) {
    const tr = document.createElement('tr');
    const td1 = document.createElement('td');
    td1.textContent = k;
    const td2 = document.createElement('td');
    td2.textContent = v;
    tr.append(td1, td2);
    table.appendChild(tr);
  }
  return table;
}
