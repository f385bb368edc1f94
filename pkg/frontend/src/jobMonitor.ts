/** Polling state machine for one job, kept as a pure reducer so the
 * transitions and the sparkline bookkeeping are unit-testable. */

import type { EditOpDoc, JobDoc } from './types.js';

const OP_STEPS: Record<string, string[]> = {
  remove: ['segment', 'remove_inpaint'],
  replace: ['segment', 'remove_inpaint', 'paste', 'final_inpaint'],
  relationship_change: [
    'segment',
    'remove_inpaint',
    'predict_position',
    'paste',
    'final_inpaint',
  ],
  add: ['predict_position', 'paste', 'final_inpaint'],
};

/** The step checklist the server will execute for these ops (its planning
 * table is stable and mirrored here for display only). */
export function planStepsForOps(ops: EditOpDoc[]): string[] {
  const steps = ops.flatMap((op) => OP_STEPS[op.kind] ?? []);
  if (ops.length > 0) steps.push('measure');
  return steps;
}

export interface MonitorState {
  phase: 'idle' | 'polling' | 'done' | 'failed';
  jobId: string | null;
  stepIndex: number | null;
  stepName: string | null;
  iteration: number | null;
  lossPoints: number[];
  sampledIterations: number[];
  error: string | null;
  pollFailures: number;
}

export function initialMonitor(): MonitorState {
  return {
    phase: 'idle',
    jobId: null,
    stepIndex: null,
    stepName: null,
    iteration: null,
    lossPoints: [],
    sampledIterations: [],
    error: null,
    pollFailures: 0,
  };
}

export function startMonitor(jobId: string): MonitorState {
  return { ...initialMonitor(), phase: 'polling', jobId };
}

/** Fold one GET /jobs/{id} response into the state. Iterations never move
 * backwards within a step; stale samples are dropped. */
export function reduceJobDoc(state: MonitorState, doc: JobDoc): MonitorState {
  const next: MonitorState = { ...state, pollFailures: 0 };
  const progress = doc.progress ?? {};
  const step = progress.step_index ?? null;
  const iteration = progress.iteration ?? null;
  const loss = progress.loss ?? null;

  if (step !== null && (state.stepIndex === null || step >= state.stepIndex)) {
    if (step !== state.stepIndex) {
      next.stepIndex = step;
      next.stepName = progress.step_name ?? null;
      next.iteration = null;
    } else {
      next.stepName = progress.step_name ?? state.stepName;
    }
  }
  if (iteration !== null) {
    const sameStep = next.stepIndex === state.stepIndex;
    const last = sameStep ? state.iteration : null;
    if (last === null || iteration >= last) {
      next.iteration = iteration;
      if (iteration !== last) {
        next.sampledIterations = [...state.sampledIterations, iteration];
        if (loss !== null) next.lossPoints = [...state.lossPoints, loss];
      }
    }
  }
  if (doc.status === 'done') next.phase = 'done';
  else if (doc.status === 'failed') {
    next.phase = 'failed';
    next.error = doc.error ?? 'job failed';
  } else next.phase = 'polling';
  return next;
}

export function reducePollError(state: MonitorState): MonitorState {
  // poll failures never lose session state; they only count up for the UI
  return { ...state, pollFailures: state.pollFailures + 1 };
}

export function monitorSummary(state: MonitorState): string {
  switch (state.phase) {
    case 'idle':
      return 'no job';
    case 'polling': {
      const step = state.stepName ? `step ${state.stepIndex}: ${state.stepName}` : 'queued';
      const iter = state.iteration !== null ? ` (iteration ${state.iteration})` : '';
      return `${step}${iter}`;
    }
    case 'done':
      return 'done';
    case 'failed':
      return `failed: ${state.error ?? 'unknown'}${
        state.stepName ? ` (step ${state.stepIndex}: ${state.stepName})` : ''
      }`;
  }
}
