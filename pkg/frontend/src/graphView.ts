/** Interactive node-link diagram drawn over the session image.
 *
 * Nodes sit at their bbox centers (spatial layout). Clicking a node selects
 * it; clicking an edge's predicate label selects the edge. All semantic
 * state lives in the graph document passed in; the view only holds the
 * selection.
 */

import { bboxCenter, nearestEdgeIndex, nearestNode } from './overlay.js';
import type { SceneGraphDoc } from './types.js';

export interface Selection {
  nodeId: string | null;
  edgeIndex: number | null;
}

export interface GraphViewCallbacks {
  onSelect(selection: Selection): void;
}

export class GraphView {
  private canvas: HTMLCanvasElement;
  private graph: SceneGraphDoc | null = null;
  private image: HTMLImageElement | null = null;
  selection: Selection = { nodeId: null, edgeIndex: null };
  private callbacks: GraphViewCallbacks;
  private edgeMidpoints: { midX: number; midY: number }[] = [];

  constructor(canvas: HTMLCanvasElement, callbacks: GraphViewCallbacks) {
    this.canvas = canvas;
    this.callbacks = callbacks;
    canvas.addEventListener('click', (ev) => this.handleClick(ev));
  }

  setState(graph: SceneGraphDoc, image: HTMLImageElement | null): void {
    this.graph = graph;
    this.image = image;
    if (this.selection.nodeId && !graph.objects.some((o) => o.id === this.selection.nodeId)) {
      this.selection = { nodeId: null, edgeIndex: null };
    }
    if (this.selection.edgeIndex !== null && this.selection.edgeIndex >= graph.relationships.length) {
      this.selection = { nodeId: null, edgeIndex: null };
    }
    this.render();
  }

  clearSelection(): void {
    this.selection = { nodeId: null, edgeIndex: null };
    this.render();
  }

  private handleClick(ev: MouseEvent): void {
    if (!this.graph) return;
    const rect = this.canvas.getBoundingClientRect();
    const x = ((ev.clientX - rect.left) / rect.width) * this.canvas.width;
    const y = ((ev.clientY - rect.top) / rect.height) * this.canvas.height;
    const nodeId = nearestNode(x, y, this.graph.objects, this.canvas.width, this.canvas.height);
    if (nodeId) {
      this.selection = { nodeId, edgeIndex: null };
    } else {
      const edgeIndex = nearestEdgeIndex(x, y, this.edgeMidpoints);
      this.selection = { nodeId: null, edgeIndex };
    }
    this.render();
    this.callbacks.onSelect(this.selection);
  }

  render(): void {
    const ctx = this.canvas.getContext('2d');
    if (!ctx || !this.graph) return;
    const { width, height } = this.canvas;
    ctx.clearRect(0, 0, width, height);
    if (this.image) {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(this.image, 0, 0, width, height);
    }

    const centers = new Map(
      this.graph.objects.map((o) => {
        const [cx, cy] = bboxCenter(o.bbox);
        return [o.id, { x: cx * width, y: cy * height }] as const;
      }),
    );

    this.edgeMidpoints = [];
    this.graph.relationships.forEach((edge, i) => {
      const s = centers.get(edge.subject);
      const o = centers.get(edge.object);
      if (!s || !o) return;
      const selected = this.selection.edgeIndex === i;
      ctx.strokeStyle = selected ? '#ff9f1c' : 'rgba(255,255,255,0.75)';
      ctx.lineWidth = selected ? 2.5 : 1.25;
      ctx.beginPath();
      ctx.moveTo(s.x, s.y);
      ctx.lineTo(o.x, o.y);
      ctx.stroke();
      // arrowhead toward the object
      const angle = Math.atan2(o.y - s.y, o.x - s.x);
      ctx.beginPath();
      ctx.moveTo(o.x - 12 * Math.cos(angle - 0.35), o.y - 12 * Math.sin(angle - 0.35));
      ctx.lineTo(o.x, o.y);
      ctx.lineTo(o.x - 12 * Math.cos(angle + 0.35), o.y - 12 * Math.sin(angle + 0.35));
      ctx.stroke();

      const midX = (s.x + o.x) / 2;
      const midY = (s.y + o.y) / 2;
      this.edgeMidpoints.push({ midX, midY });
      ctx.font = '11px sans-serif';
      const label = edge.predicate;
      const w = ctx.measureText(label).width + 8;
      ctx.fillStyle = selected ? '#ff9f1c' : 'rgba(20,20,28,0.85)';
      ctx.fillRect(midX - w / 2, midY - 9, w, 16);
      ctx.fillStyle = selected ? '#1b1b22' : '#e8e8ef';
      ctx.textAlign = 'center';
      ctx.fillText(label, midX, midY + 3);
    });

    for (const node of this.graph.objects) {
      const c = centers.get(node.id);
      if (!c) continue;
      const selected = this.selection.nodeId === node.id;
      ctx.beginPath();
      ctx.arc(c.x, c.y, selected ? 11 : 9, 0, Math.PI * 2);
      ctx.fillStyle = selected ? '#ff9f1c' : '#4d7cfe';
      ctx.fill();
      ctx.strokeStyle = '#11131a';
      ctx.lineWidth = 2;
      ctx.stroke();
      const attrs = Object.values(node.attributes).join(' ');
      const label = attrs ? `${attrs} ${node.category}` : node.category;
      ctx.font = '12px sans-serif';
      const w = ctx.measureText(label).width + 10;
      ctx.fillStyle = 'rgba(20,20,28,0.85)';
      ctx.fillRect(c.x - w / 2, c.y + 13, w, 17);
      ctx.fillStyle = '#e8e8ef';
      ctx.textAlign = 'center';
      ctx.fillText(label, c.x, c.y + 25);
    }
  }
}
