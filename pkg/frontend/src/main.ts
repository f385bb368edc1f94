/** Page wiring: session lifecycle, edit gestures, job submission, and the
 * result comparison. All semantic state round-trips through the server. */

import { ApiError, Client } from './api.js';
import { CompareView, metricsTable } from './compare.js';
import { addOp, predicateChangeOp, removeOp, replaceOp, validateOpShape } from './editops.js';
import { freshNodeId, incidentEdges } from './graph.js';
import { GraphView } from './graphView.js';
import {
  initialMonitor,
  monitorSummary,
  planStepsForOps,
  reduceJobDoc,
  reducePollError,
  startMonitor,
  type MonitorState,
} from './jobMonitor.js';
import { drawSparkline } from './sparkline.js';
import type { EditOpDoc, SessionState } from './types.js';

const client = new Client('');

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const state = {
  session: null as SessionState | null,
  image: null as HTMLImageElement | null,
  monitor: initialMonitor() as MonitorState,
  monitorTimer: 0,
  submittedOps: [] as EditOpDoc[],
  beforeUrl: '',
};

const graphView = new GraphView(el<HTMLCanvasElement>('graph-canvas'), {
  onSelect: () => renderInspector(),
});
const compare = new CompareView(el('compare-root'));

function flash(message: string, isError = false): void {
  const bar = el('statusbar');
  bar.textContent = message;
  bar.className = isError ? 'status error' : 'status';
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return err.path ? `${err.message} (${err.path})` : err.message;
  }
  return String(err);
}

async function refreshSession(): Promise<void> {
  if (!state.session) return;
  state.session = await client.session(state.session.id);
  const img = new Image();
  img.src = `data:image/png;base64,${state.session.image_png_base64}`;
  await img.decode();
  state.image = img;
  renderAll();
}

function renderAll(): void {
  if (!state.session) return;
  graphView.setState(state.session.graph, state.image);
  renderOpsList();
  renderInspector();
  el<HTMLButtonElement>('submit-job').disabled =
    state.session.pending_ops.length === 0;
  el('session-label').textContent = state.session.id;
}

function renderOpsList(): void {
  const list = el('ops-list');
  list.innerHTML = '';
  const ops = state.session?.pending_ops ?? [];
  for (const op of ops) {
    const li = document.createElement('li');
    li.textContent = summarizeOp(op);
    list.appendChild(li);
  }
  el('ops-count').textContent = String(ops.length);
}

function summarizeOp(op: EditOpDoc): string {
  switch (op.kind) {
    case 'remove':
      return `remove ${op.target_id}`;
    case 'replace':
      return `replace ${op.target_id} -> ${op.new_node?.category}`;
    case 'relationship_change':
      return `${op.edge_change?.old.predicate} -> ${op.edge_change?.new.predicate} on ${op.target_id}`;
    case 'add':
      return `add ${op.new_node?.id} (${op.new_node?.category})`;
  }
}

async function stageOp(op: EditOpDoc): Promise<void> {
  if (!state.session) return;
  const problem = validateOpShape(op);
  if (problem) {
    flash(problem, true);
    return;
  }
  try {
    await client.postOp(state.session.id, op);
    await refreshSession();
    flash(`staged: ${summarizeOp(op)}`);
  } catch (err) {
    flash(describeError(err), true);
  }
}

function renderInspector(): void {
  const panel = el('inspector');
  panel.innerHTML = '';
  const session = state.session;
  if (!session) return;
  const selection = graphView.selection;

  if (selection.nodeId) {
    const node = session.graph.objects.find((o) => o.id === selection.nodeId);
    if (!node) return;
    panel.appendChild(heading(`node ${node.id}`));

    const categoryInput = textInput('category', node.category);
    const attrsInput = textInput(
      'attributes (k=v, comma separated)',
      Object.entries(node.attributes)
        .map(([k, v]) => `${k}=${v}`)
        .join(', '),
    );
    panel.append(categoryInput.wrap, attrsInput.wrap);

    panel.appendChild(
      button('apply replace', () => {
        const attributes: Record<string, string> = {};
        for (const part of attrsInput.input.value.split(',')) {
          const [k, v] = part.split('=').map((s) => s.trim());
          if (k && v !== undefined) attributes[k] = v;
        }
        void stageOp(
          replaceOp(node.id, categoryInput.input.value.trim(), attributes, node.bbox),
        );
      }),
    );
    panel.appendChild(
      button('delete node', () => void stageOp(removeOp(node.id)), 'danger'),
    );
    const edges = incidentEdges(session.graph, node.id);
    panel.appendChild(
      paragraph(`${edges.length} incident edge${edges.length === 1 ? '' : 's'}`),
    );
    return;
  }

  if (selection.edgeIndex !== null) {
    const edge = session.graph.relationships[selection.edgeIndex];
    if (!edge) return;
    panel.appendChild(heading(`${edge.subject} → ${edge.object}`));
    const select = document.createElement('select');
    for (const predicate of session.predicates) {
      const option = document.createElement('option');
      option.value = predicate;
      option.textContent = predicate;
      option.selected = predicate === edge.predicate;
      select.appendChild(option);
    }
    const wrap = document.createElement('label');
    wrap.className = 'field';
    wrap.textContent = 'predicate';
    wrap.appendChild(select);
    panel.appendChild(wrap);
    panel.appendChild(
      button('change relationship', () => {
        if (select.value === edge.predicate) {
          flash('pick a different predicate', true);
          return;
        }
        void stageOp(predicateChangeOp(edge, select.value));
      }),
    );
    return;
  }

  // nothing selected: add-node wizard
  panel.appendChild(heading('add object'));
  const idInput = textInput('id', freshNodeId(session.graph, 'new'));
  const categoryInput = textInput('category', 'cube');
  const bboxInput = textInput('bbox x0,y0,x1,y1', '0.6,0.6,0.85,0.85');
  const predicateSelect = document.createElement('select');
  for (const p of session.predicates) {
    const o = document.createElement('option');
    o.value = p;
    o.textContent = p;
    predicateSelect.appendChild(o);
  }
  const otherSelect = document.createElement('select');
  for (const node of session.graph.objects) {
    const o = document.createElement('option');
    o.value = node.id;
    o.textContent = node.id;
    otherSelect.appendChild(o);
  }
  const predWrap = document.createElement('label');
  predWrap.className = 'field';
  predWrap.textContent = 'relation to';
  predWrap.append(predicateSelect, otherSelect);
  const sourceInput = textInput('source image (library path, optional)', '');
  const sourceBbox = textInput('source bbox (optional)', '');
  panel.append(idInput.wrap, categoryInput.wrap, bboxInput.wrap, predWrap,
               sourceInput.wrap, sourceBbox.wrap);
  panel.appendChild(
    button('add node', () => {
      const bbox = bboxInput.input.value.split(',').map(Number);
      if (bbox.length !== 4 || bbox.some((v) => Number.isNaN(v))) {
        flash('bbox needs 4 numbers', true);
        return;
      }
      const nodeId = idInput.input.value.trim();
      let source;
      if (sourceInput.input.value.trim()) {
        const sb = sourceBbox.input.value.split(',').map(Number);
        if (sb.length !== 4 || sb.some((v) => Number.isNaN(v))) {
          flash('source bbox needs 4 numbers', true);
          return;
        }
        source = {
          image: sourceInput.input.value.trim(),
          bbox: sb as [number, number, number, number],
        };
      }
      void stageOp(
        addOp(
          {
            id: nodeId,
            category: categoryInput.input.value.trim(),
            attributes: {},
            bbox: bbox as [number, number, number, number],
          },
          [
            {
              subject: nodeId,
              predicate: predicateSelect.value,
              object: otherSelect.value,
            },
          ],
          source,
        ),
      );
    }),
  );
}

function heading(text: string): HTMLElement {
  const h = document.createElement('h3');
  h.textContent = text;
  return h;
}

function paragraph(text: string): HTMLElement {
  const p = document.createElement('p');
  p.textContent = text;
  return p;
}

function textInput(label: string, value: string) {
  const wrap = document.createElement('label');
  wrap.className = 'field';
  wrap.textContent = label;
  const input = document.createElement('input');
  input.type = 'text';
  input.value = value;
  wrap.appendChild(input);
  return { wrap, input };
}

function button(label: string, onClick: () => void, cls = ''): HTMLElement {
  const b = document.createElement('button');
  b.textContent = label;
  if (cls) b.className = cls;
  b.addEventListener('click', onClick);
  return b;
}

// -- job submission + monitoring

function renderMonitor(): void {
  el('job-status').textContent = monitorSummary(state.monitor);
  const checklist = el('step-checklist');
  checklist.innerHTML = '';
  const steps = planStepsForOps(state.submittedOps);
  steps.forEach((name, i) => {
    const li = document.createElement('li');
    li.textContent = name;
    const current = state.monitor.stepIndex;
    if (state.monitor.phase === 'done' || (current !== null && i < current)) {
      li.className = 'done';
    } else if (current === i && state.monitor.phase === 'polling') {
      li.className = 'current';
    } else if (state.monitor.phase === 'failed' && current === i) {
      li.className = 'failed';
    }
    checklist.appendChild(li);
  });
  drawSparkline(el<HTMLCanvasElement>('loss-sparkline'), state.monitor.lossPoints);
}

async function pollOnce(jobId: string): Promise<void> {
  try {
    const doc = await client.job(jobId);
    state.monitor = reduceJobDoc(state.monitor, doc);
  } catch (err) {
    state.monitor = reducePollError(state.monitor);
    flash(`poll failed (${state.monitor.pollFailures}): ${describeError(err)}`, true);
  }
  renderMonitor();
  if (state.monitor.phase === 'done') {
    window.clearInterval(state.monitorTimer);
    await showResult(jobId);
  } else if (state.monitor.phase === 'failed') {
    window.clearInterval(state.monitorTimer);
    flash(monitorSummary(state.monitor), true);
  }
}

async function showResult(jobId: string): Promise<void> {
  const result = await client.jobResult(jobId);
  const afterUrl = `data:image/png;base64,${result.result_png_base64}`;
  compare.setImages(state.beforeUrl, afterUrl, result.metrics);
  const metricsRoot = el('metrics-root');
  metricsRoot.innerHTML = '';
  if (result.metrics) metricsRoot.appendChild(metricsTable(result.metrics));
  flash('job done');
  await refreshSession();
}

async function submitJob(): Promise<void> {
  if (!state.session) return;
  state.submittedOps = [...state.session.pending_ops];
  state.beforeUrl = `data:image/png;base64,${state.session.image_png_base64}`;
  const iterations = Number(el<HTMLInputElement>('cfg-iterations').value) || 500;
  const guideMode = el<HTMLSelectElement>('cfg-guide').value;
  const seed = Number(el<HTMLInputElement>('cfg-seed').value) || 0;
  const spec = {
    inpaint: {
      iterations,
      guide_mode: guideMode,
      noise_seed: seed,
      network: { depth: 4, channels: 24 },
    },
  };
  try {
    const jobId = await client.submitJob(state.session.id, spec);
    state.monitor = startMonitor(jobId);
    renderMonitor();
    flash(`job ${jobId} queued`);
    state.monitorTimer = window.setInterval(() => void pollOnce(jobId), 1000);
    await refreshSession();
  } catch (err) {
    flash(describeError(err), true);
  }
}

async function createSession(): Promise<void> {
  const imageFile = el<HTMLInputElement>('image-file').files?.[0];
  const graphFile = el<HTMLInputElement>('graph-file').files?.[0];
  if (!imageFile || !graphFile) {
    flash('pick an image and a graph JSON file', true);
    return;
  }
  try {
    const graph = JSON.parse(await graphFile.text());
    const sessionId = await client.createSession(imageFile, graph);
    state.session = await client.session(sessionId);
    await refreshSession();
    flash(`session ${sessionId}`);
  } catch (err) {
    flash(describeError(err), true);
  }
}

async function openSession(): Promise<void> {
  const sessionId = el<HTMLInputElement>('session-id').value.trim();
  if (!sessionId) return;
  try {
    state.session = await client.session(sessionId);
    await refreshSession();
    flash(`session ${sessionId}`);
  } catch (err) {
    flash(describeError(err), true);
  }
}

function wire(): void {
  el('create-session').addEventListener('click', () => void createSession());
  el('open-session').addEventListener('click', () => void openSession());
  el('submit-job').addEventListener('click', () => void submitJob());
  el('toggle-compare').addEventListener('click', () => compare.toggleMode());
  el('clear-selection').addEventListener('click', () => {
    graphView.clearSelection();
    renderInspector();
  });
  void client
    .health()
    .then((h) => flash(`service ok (${h.version})`))
    .catch((err) => flash(describeError(err), true));
}

wire();
