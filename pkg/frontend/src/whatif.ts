import type { Answers, FeatureDescriptor, RiskDelta } from './types.js';

// What-if mode only unlocks actionable lifestyle levers; demographics,
// disability, and infection history stay fixed at the baseline.
const EDITABLE_CATEGORIES = new Set(['Exercise', 'Smoking', 'Alcohol']);
const EDITABLE_IDS = new Set(['weight_pounds']);

export function isEditableInWhatIf(feature: FeatureDescriptor): boolean {
  return EDITABLE_CATEGORIES.has(feature.category) || EDITABLE_IDS.has(feature.id);
}

/** Fields where the modified answers differ from the baseline. */
export function changedFields(baseline: Answers, modified: Answers): string[] {
  const changed: string[] = [];
  for (const key of Object.keys(modified)) {
    if (baseline[key] !== modified[key]) {
      changed.push(key);
    }
  }
  return changed;
}

/**
 * Per-disease risk movement between two /predict responses. Risks are used
 * verbatim; identical inputs produce deltas of exactly 0.
 */
export function computeDeltas(
  before: Record<string, number>,
  after: Record<string, number>,
): RiskDelta[] {
  return Object.keys(before).map((disease) => {
    const b = before[disease] ?? 0;
    const a = after[disease] ?? b;
    const delta = a - b;
    return {
      disease,
      before: b,
      after: a,
      delta,
      direction: delta > 0 ? 'up' : delta < 0 ? 'down' : 'same',
    };
  });
}

export function formatDelta(delta: number): string {
  if (delta === 0) {
    return '±0.0pp';
  }
  const pp = delta * 100;
  return `${pp > 0 ? '+' : ''}${pp.toFixed(1)}pp`;
}
