/** Coordinate mapping between normalized bboxes and displayed pixels. */

import type { Bbox } from './types.js';

export interface Rect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** Map a normalized bbox onto a rendered image of viewW x viewH css pixels.
 * The overlay must land exactly where the metrics report says the region of
 * interest is, so this is the single mapping used everywhere. */
export function bboxToRect(bbox: Bbox, viewW: number, viewH: number): Rect {
  const [x0, y0, x1, y1] = bbox;
  return {
    left: x0 * viewW,
    top: y0 * viewH,
    width: (x1 - x0) * viewW,
    height: (y1 - y0) * viewH,
  };
}

export function rectToBbox(rect: Rect, viewW: number, viewH: number): Bbox {
  return [
    rect.left / viewW,
    rect.top / viewH,
    (rect.left + rect.width) / viewW,
    (rect.top + rect.height) / viewH,
  ];
}

export function bboxCenter(bbox: Bbox): [number, number] {
  return [(bbox[0] + bbox[2]) / 2, (bbox[1] + bbox[3]) / 2];
}

export function pointInRect(x: number, y: number, rect: Rect): boolean {
  return (
    x >= rect.left && x < rect.left + rect.width && y >= rect.top && y < rect.top + rect.height
  );
}

/** Hit test for node markers drawn at bbox centers. */
export function nearestNode(
  x: number,
  y: number,
  nodes: { id: string; bbox: Bbox }[],
  viewW: number,
  viewH: number,
  radius = 14,
): string | null {
  let best: string | null = null;
  let bestDist = radius * radius;
  for (const node of nodes) {
    const [cx, cy] = bboxCenter(node.bbox);
    const dx = cx * viewW - x;
    const dy = cy * viewH - y;
    const d = dx * dx + dy * dy;
    if (d <= bestDist) {
      best = node.id;
      bestDist = d;
    }
  }
  return best;
}

/** Hit test for edge midpoints (where the predicate label is drawn). */
export function nearestEdgeIndex(
  x: number,
  y: number,
  edges: { midX: number; midY: number }[],
  radius = 12,
): number | null {
  let best: number | null = null;
  let bestDist = radius * radius;
  edges.forEach((e, i) => {
    const dx = e.midX - x;
    const dy = e.midY - y;
    const d = dx * dx + dy * dy;
    if (d <= bestDist) {
      best = i;
      bestDist = d;
    }
  });
  return best;
}
