import { explain, getSchema, predict } from './api.js';
import { renderAttributionBars, renderRiskDeltas } from './charts.js';
import { collectAnswers, renderQuestionnaire, setAnswers } from './questionnaire.js';
import type { Answers, Schema, SessionState } from './types.js';
import { computeDeltas, isEditableInWhatIf } from './whatif.js';

const state: SessionState = {
  answers: {},
  baseline: null,
  currentRisks: null,
  focusedDisease: null,
};

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function refreshWhatIf(schema: Schema, form: HTMLFormElement): Promise<void> {
  if (!state.baseline) return;
  const modified: Answers = { ...state.baseline.answers, ...collectAnswers(form, schema) };
  const response = await predict(modified);
  state.currentRisks = response.risks;
  renderRiskDeltas(el('deltas'), computeDeltas(state.baseline.risks, response.risks));

  if (state.focusedDisease) {
    const explanation = await explain(modified, state.focusedDisease);
    renderAttributionBars(el('attribution'), explanation);
  }
}

function enterWhatIfMode(schema: Schema, form: HTMLFormElement): void {
  for (const control of form.querySelectorAll<HTMLInputElement | HTMLSelectElement>('[data-feature]')) {
    const feature = schema.features.find((f) => f.id === control.dataset.feature);
    control.disabled = !(feature && isEditableInWhatIf(feature));
  }
  const submit = form.querySelector('button[type=submit]');
  if (submit) (submit as HTMLButtonElement).hidden = true;
  el('whatif-panel').hidden = false;
}

function renderDiseasePicker(schema: Schema, form: HTMLFormElement): void {
  const picker = el('disease-picker');
  picker.textContent = '';
  for (const disease of Object.keys(state.baseline?.risks ?? {})) {
    const button = document.createElement('button');
    button.textContent = disease;
    button.addEventListener('click', () => {
      state.focusedDisease = disease;
      void refreshWhatIf(schema, form);
    });
    picker.appendChild(button);
  }
}

async function lockBaseline(schema: Schema, form: HTMLFormElement, answers: Answers): Promise<void> {
  const response = await predict(answers);
  state.answers = answers;
  state.baseline = { answers: { ...answers }, risks: { ...response.risks } };
  state.currentRisks = { ...response.risks };
  el('disclaimer').textContent = response.disclaimer;
  renderRiskDeltas(el('deltas'), computeDeltas(response.risks, response.risks));
  renderDiseasePicker(schema, form);
  enterWhatIfMode(schema, form);
  form.addEventListener('input', () => void refreshWhatIf(schema, form));
}

function showRetry(error: unknown): void {
  const root = el('app');
  root.textContent = '';
  const message = document.createElement('p');
  message.className = 'load-error';
  message.textContent = `Could not load the questionnaire schema (${String(error)}).`;
  const retry = document.createElement('button');
  retry.textContent = 'Retry';
  retry.addEventListener('click', () => void boot());
  root.append(message, retry);
}

export async function boot(): Promise<void> {
  let schema: Schema;
  try {
    schema = await getSchema();
  } catch (error) {
    showRetry(error);
    return;
  }
  const root = el('app');
  root.textContent = '';
  const form = renderQuestionnaire(root, schema, (answers) => {
    void lockBaseline(schema, form, answers);
  });

  // re-lock: copy the current modified answers back into a fresh baseline
  el('relock').addEventListener('click', () => {
    if (!state.baseline) return;
    const merged = { ...state.baseline.answers, ...collectAnswers(form, schema) };
    setAnswers(form, merged);
    void lockBaseline(schema, form, merged);
  });
}

if (typeof window !== 'undefined' && document.getElementById('app')) {
  void boot();
}
