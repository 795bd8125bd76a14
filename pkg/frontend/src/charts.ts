import type { ExplainResponse, RiskDelta } from './types.js';

/** Horizontal signed bar chart of SHAP values, largest |value| first. */
export function renderAttributionBars(
  container: HTMLElement,
  explanation: ExplainResponse,
  maxBars = 12,
): void {
  const doc = container.ownerDocument;
  container.textContent = '';

  const header = doc.createElement('p');
  header.className = 'attribution-header';
  header.textContent =
    `${explanation.disease}: risk ${explanation.fx.toFixed(3)} ` +
    `(baseline ${explanation.base.toFixed(3)})`;
  container.appendChild(header);

  const entries = Object.entries(explanation.phi)
    .sort((a, b) => Math.abs(b[1]) - Math.abs(a[1]))
    .slice(0, maxBars);
  const scale = Math.max(...entries.map(([, v]) => Math.abs(v)), 1e-12);

  for (const [feature, value] of entries) {
    const row = doc.createElement('div');
    row.className = 'bar-row';
    row.dataset.feature = feature;
    row.title = `${feature}: ${value}`; // raw value in the tooltip

    const label = doc.createElement('span');
    label.className = 'bar-label';
    label.textContent = feature;
    row.appendChild(label);

    const bar = doc.createElement('span');
    bar.className = value >= 0 ? 'bar positive' : 'bar negative';
    bar.style.width = `${(Math.abs(value) / scale) * 100}%`;
    row.appendChild(bar);

    const amount = doc.createElement('span');
    amount.className = 'bar-value';
    amount.textContent = value.toFixed(4);
    row.appendChild(amount);

    container.appendChild(row);
  }
}

/** Risk gauges with movement badges for the what-if comparison. */
export function renderRiskDeltas(container: HTMLElement, deltas: RiskDelta[]): void {
  const doc = container.ownerDocument;
  container.textContent = '';
  for (const d of deltas) {
    const card = doc.createElement('div');
    card.className = `risk-card ${d.direction}`;
    card.dataset.disease = d.disease;
    card.title = `before ${d.before} after ${d.after}`; // raw values in the tooltip

    const name = doc.createElement('strong');
    name.textContent = d.disease;
    card.appendChild(name);

    const gauge = doc.createElement('span');
    gauge.className = 'gauge';
    gauge.textContent = d.after.toFixed(3);
    card.appendChild(gauge);

    const badge = doc.createElement('span');
    badge.className = 'badge';
    badge.dataset.direction = d.direction;
    badge.textContent = d.direction === 'up' ? '▲' : d.direction === 'down' ? '▼' : '—';
    card.appendChild(badge);

    const amount = doc.createElement('span');
    amount.className = 'delta';
    amount.textContent =
      d.delta === 0 ? '±0.0pp' : `${d.delta > 0 ? '+' : ''}${(d.delta * 100).toFixed(1)}pp`;
    card.appendChild(amount);

    container.appendChild(card);
  }
}
