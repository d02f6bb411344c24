// Tiny typed DOM helpers; no framework.

export function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | boolean | ((ev: Event) => void)> = {},
  ...children: (Node | string | null)[]
): HTMLElementTagNameMap[K] {
  const el = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      el.addEventListener(key.replace(/^on/, ""), value);
    } else if (typeof value === "boolean") {
      if (key === "disabled") (el as unknown as { disabled: boolean }).disabled = value;
      else if (value) el.setAttribute(key, "");
    } else {
      el.setAttribute(key, value);
    }
  }
  for (const child of children) {
    if (child === null) continue;
    el.append(child);
  }
  return el;
}

export function clear(el: HTMLElement): void {
  while (el.firstChild) el.removeChild(el.firstChild);
}

export function badge(state: string): HTMLElement {
  const el = h("span", { class: `badge badge-${state.toLowerCase()}` }, state);
  el.dataset.state = state;
  return el;
}

export function fmtTime(epoch: number): string {
  return new Date(epoch * 1000).toISOString().replace("T", " ").slice(0, 19);
}

export function fmtMetric(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toFixed(4);
}
