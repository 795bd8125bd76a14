import type { Answers, FeatureDescriptor, Schema } from './types.js';

/** Features in schema order, bucketed into their questionnaire groups. */
export function groupFeatures(schema: Schema): Map<string, FeatureDescriptor[]> {
  const groups = new Map<string, FeatureDescriptor[]>();
  for (const feature of schema.features) {
    const bucket = groups.get(feature.category);
    if (bucket) {
      bucket.push(feature);
    } else {
      groups.set(feature.category, [feature]);
    }
  }
  return groups;
}

/**
 * Client-side mirror of the server's range check: the UI never submits an
 * answer outside the schema's valid range.
 */
export function validateAnswer(feature: FeatureDescriptor, raw: string): string | null {
  if (raw.trim() === '') {
    return 'required';
  }
  const value = Number(raw);
  if (!Number.isFinite(value)) {
    return 'must be a number';
  }
  const [lo, hi] = feature.valid_range;
  if (value < lo || value > hi) {
    return `must be between ${lo} and ${hi}`;
  }
  return null;
}

function controlFor(feature: FeatureDescriptor, doc: Document): HTMLElement {
  if (feature.options) {
    const select = doc.createElement('select');
    select.name = feature.id;
    select.dataset.feature = feature.id;
    for (const [code, label] of Object.entries(feature.options)) {
      const option = doc.createElement('option');
      option.value = code;
      option.textContent = label;
      select.appendChild(option);
    }
    return select;
  }
  const input = doc.createElement('input');
  input.type = 'number';
  input.name = feature.id;
  input.dataset.feature = feature.id;
  const [lo, hi] = feature.valid_range;
  input.min = String(lo);
  input.max = String(hi);
  input.step = feature.kind === 'continuous' ? 'any' : '1';
  return input;
}

/**
 * Render the questionnaire: one fieldset per group, one control per feature
 * (labeled select for coded answers, validated numeric input otherwise).
 * Inline validation disables the submit button while any answer is invalid.
 */
export function renderQuestionnaire(
  container: HTMLElement,
  schema: Schema,
  onSubmit: (answers: Answers) => void,
): HTMLFormElement {
  const doc = container.ownerDocument;
  const form = doc.createElement('form');
  form.className = 'questionnaire';

  for (const [category, features] of groupFeatures(schema)) {
    const fieldset = doc.createElement('fieldset');
    fieldset.dataset.category = category;
    const legend = doc.createElement('legend');
    legend.textContent = category;
    fieldset.appendChild(legend);

    for (const feature of features) {
      const row = doc.createElement('label');
      row.className = 'question';
      const prompt = doc.createElement('span');
      prompt.textContent = feature.display || feature.id;
      row.appendChild(prompt);
      const control = controlFor(feature, doc);
      row.appendChild(control);
      const errorBox = doc.createElement('em');
      errorBox.className = 'error';
      errorBox.dataset.errorFor = feature.id;
      row.appendChild(errorBox);
      fieldset.appendChild(row);
    }
    form.appendChild(fieldset);
  }

  const submit = doc.createElement('button');
  submit.type = 'submit';
  submit.textContent = 'Lock in my answers';
  form.appendChild(submit);

  const featureById = new Map(schema.features.map((f) => [f.id, f]));

  const revalidate = () => {
    let allValid = true;
    for (const control of form.querySelectorAll<HTMLInputElement | HTMLSelectElement>('[data-feature]')) {
      const feature = featureById.get(control.dataset.feature ?? '');
      if (!feature) continue;
      const problem = validateAnswer(feature, control.value);
      const box = form.querySelector<HTMLElement>(`[data-error-for="${feature.id}"]`);
      if (box) box.textContent = problem ?? '';
      if (problem) allValid = false;
    }
    submit.disabled = !allValid;
    return allValid;
  };

  form.addEventListener('input', revalidate);
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    if (revalidate()) {
      onSubmit(collectAnswers(form, schema));
    }
  });
  revalidate();

  container.appendChild(form);
  return form;
}

export function collectAnswers(form: HTMLFormElement, schema: Schema): Answers {
  const answers: Answers = {};
  for (const feature of schema.features) {
    const control = form.querySelector<HTMLInputElement | HTMLSelectElement>(
      `[data-feature="${feature.id}"]`,
    );
    if (control && control.value.trim() !== '') {
      answers[feature.id] = Number(control.value);
    }
  }
  return answers;
}

export function setAnswers(form: HTMLFormElement, answers: Answers): void {
  for (const [id, value] of Object.entries(answers)) {
    const control = form.querySelector<HTMLInputElement | HTMLSelectElement>(
      `[data-feature="${id}"]`,
    );
    if (control) {
      control.value = String(value);
    }
  }
  form.dispatchEvent(new Event('input'));
}
