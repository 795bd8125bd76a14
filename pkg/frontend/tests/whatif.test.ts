import { afterEach, describe, expect, it, vi } from 'vitest';

import { predict } from '../src/api.js';
import { renderAttributionBars, renderRiskDeltas } from '../src/charts.js';
import type { Answers, ExplainResponse, Schema } from '../src/types.js';
import { changedFields, computeDeltas, formatDelta, isEditableInWhatIf } from '../src/whatif.js';

import schemaFixture from './fixtures/schema.json';

const schema = schemaFixture as unknown as Schema;

afterEach(() => {
  vi.restoreAllMocks();
});

// Planted fixture standing in for a trained model: risk rises with weight
// and binge days, falls with exercise sessions. Mirrors the known-effect
// synthetic data the backend is validated against.
function plantedRisk(answers: Answers): number {
  const z =
    0.02 * ((answers.weight_pounds ?? 180) - 180) +
    0.08 * (answers.binge_days ?? 0) -
    0.01 * (answers.exercise_freq_1 ?? 0);
  return 1 / (1 + Math.exp(-z));
}

function mockPredict() {
  return vi.spyOn(globalThis, 'fetch').mockImplementation(async (_url, init) => {
    const answers = JSON.parse(String(init?.body ?? '{}')) as Answers;
    const body = {
      risks: { DIABETE4: plantedRisk(answers) },
      disclaimer: 'not a diagnosis',
      schema_version: 1,
    };
    return new Response(JSON.stringify(body), {
      status: 200,
      headers: { 'Content-Type': 'application/json' },
    });
  });
}

function baselineAnswers(): Answers {
  const answers: Answers = {};
  for (const f of schema.features) {
    answers[f.id] = f.valid_range[0];
  }
  answers.weight_pounds = 180;
  answers.exercise_freq_1 = 10;
  answers.binge_days = 4;
  return answers;
}

describe('what-if comparison', () => {
  it('identical baseline and modified answers give all-zero deltas', async () => {
    mockPredict();
    const answers = baselineAnswers();
    const before = (await predict(answers)).risks;
    const after = (await predict({ ...answers })).risks;
    const deltas = computeDeltas(before, after);
    expect(deltas).toHaveLength(1);
    expect(deltas[0]!.delta).toBe(0);
    expect(deltas[0]!.direction).toBe('same');
  });

  it('reducing a positively planted lever shows a negative delta', async () => {
    mockPredict();
    const baseline = baselineAnswers();
    const before = (await predict(baseline)).risks;

    const lighter = { ...baseline, weight_pounds: 150 };
    let deltas = computeDeltas(before, (await predict(lighter)).risks);
    expect(deltas[0]!.delta).toBeLessThan(0);
    expect(deltas[0]!.direction).toBe('down');

    const moreBinge = { ...baseline, binge_days: 12 };
    deltas = computeDeltas(before, (await predict(moreBinge)).risks);
    expect(deltas[0]!.delta).toBeGreaterThan(0);
    expect(deltas[0]!.direction).toBe('up');

    const moreExercise = { ...baseline, exercise_freq_1: 30 };
    deltas = computeDeltas(before, (await predict(moreExercise)).risks);
    expect(deltas[0]!.direction).toBe('down');
  });

  it('replaying the same requests reproduces the same deltas (stateless server)', async () => {
    mockPredict();
    const baseline = baselineAnswers();
    const modified = { ...baseline, weight_pounds: 220 };
    const first = computeDeltas((await predict(baseline)).risks, (await predict(modified)).risks);
    const again = computeDeltas((await predict(baseline)).risks, (await predict(modified)).risks);
    expect(again).toEqual(first);
  });

  it('deduplicates concurrent identical requests', async () => {
    const spy = mockPredict();
    const answers = baselineAnswers();
    const [a, b] = await Promise.all([predict(answers), predict(answers)]);
    expect(a.risks).toEqual(b.risks);
    expect(spy).toHaveBeenCalledTimes(1);
  });

  it('reports which fields changed', () => {
    const baseline = baselineAnswers();
    expect(changedFields(baseline, { ...baseline })).toEqual([]);
    expect(changedFields(baseline, { ...baseline, binge_days: 9 })).toEqual(['binge_days']);
  });

  it('only lifestyle levers are editable in what-if mode', () => {
    const byId = new Map(schema.features.map((f) => [f.id, f]));
    expect(isEditableInWhatIf(byId.get('smoking_frequency')!)).toBe(true);
    expect(isEditableInWhatIf(byId.get('alcohol_days')!)).toBe(true);
    expect(isEditableInWhatIf(byId.get('exercise_freq_1')!)).toBe(true);
    expect(isEditableInWhatIf(byId.get('weight_pounds')!)).toBe(true);
    expect(isEditableInWhatIf(byId.get('deaf')!)).toBe(false);
    expect(isEditableInWhatIf(byId.get('had_covid')!)).toBe(false);
    expect(isEditableInWhatIf(byId.get('employment')!)).toBe(false);
  });

  it('formats deltas in percentage points', () => {
    expect(formatDelta(0)).toBe('±0.0pp');
    expect(formatDelta(0.024)).toBe('+2.4pp');
    expect(formatDelta(-0.006)).toBe('-0.6pp');
  });
});

describe('rendering', () => {
  it('risk cards show verbatim values in tooltips and badges by direction', () => {
    document.body.innerHTML = '<div id="deltas"></div>';
    const container = document.getElementById('deltas')!;
    renderRiskDeltas(
      container,
      computeDeltas({ DIABETE4: 0.41234567, ASTHMA3: 0.2 }, { DIABETE4: 0.45, ASTHMA3: 0.2 }),
    );
    const cards = container.querySelectorAll('.risk-card');
    expect(cards).toHaveLength(2);
    expect(cards[0]!.getAttribute('title')).toContain('0.41234567'); // raw value
    expect(cards[0]!.querySelector('.badge')!.getAttribute('data-direction')).toBe('up');
    expect(cards[1]!.querySelector('.badge')!.getAttribute('data-direction')).toBe('same');
  });

  it('attribution bars sum (with the base) to the displayed risk', () => {
    document.body.innerHTML = '<div id="attribution"></div>';
    const phi: Record<string, number> = { weight_pounds: 0.2, binge_days: 0.05, sex: -0.08 };
    const base = 0.5;
    const fx = base + 0.2 + 0.05 - 0.08;
    const explanation: ExplainResponse = {
      disease: 'DIABETE4',
      base,
      fx,
      phi,
      top: [],
      disclaimer: '',
      schema_version: 1,
    };
    renderAttributionBars(document.getElementById('attribution')!, explanation);
    const shown = Object.values(phi).reduce((s, v) => s + v, base);
    expect(shown).toBeCloseTo(fx, 9); // mirrors the local-accuracy invariant
    const rows = document.querySelectorAll('.bar-row');
    expect(rows[0]!.getAttribute('data-feature')).toBe('weight_pounds'); // largest |phi| first
    expect(rows[0]!.querySelector('.bar')!.className).toContain('positive');
    const sexRow = [...rows].find((r) => r.getAttribute('data-feature') === 'sex')!;
    expect(sexRow.querySelector('.bar')!.className).toContain('negative');
  });
});
