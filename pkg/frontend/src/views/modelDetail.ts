// Model detail: metrics, version history, drift sparkline, and the
// lifecycle buttons. Button availability comes only from the shared
// state-gating table; every button issues exactly one API call and the view
// re-renders when the resulting events land.

import { ApiError } from "../api";
import { actionEnabled, type UiAction } from "../gating";
import { badge, clear, fmtMetric, fmtTime, h } from "../render";
import type { AppStore } from "../store";
import type { DriftReport, MetricsPayload } from "../types";

function errorLine(err: unknown): string {
  if (err instanceof ApiError) {
    const detail = err.body.detail?.length ? ` ${JSON.stringify(err.body.detail)}` : "";
    return `${err.body.code}: ${err.body.message}${detail}`;
  }
  return String(err);
}

function sparkline(values: number[], threshold: number): HTMLElement {
  const width = 160;
  const height = 36;
  const max = Math.max(threshold * 1.5, ...values, 0.01);
  const step = values.length > 1 ? width / (values.length - 1) : width;
  const points = values
    .map((v, i) => `${(i * step).toFixed(1)},${(height - (v / max) * height).toFixed(1)}`)
    .join(" ");
  const ty = height - (threshold / max) * height;
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("class", "sparkline");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.innerHTML =
    `<line x1="0" y1="${ty}" x2="${width}" y2="${ty}" class="spark-threshold"/>` +
    (values.length ? `<polyline points="${points}" class="spark-line"/>` : "");
  const wrap = h("span", {});
  wrap.append(svg);
  return wrap;
}

export function renderModelDetail(
  root: HTMLElement,
  store: AppStore,
  modelId: string,
): () => void {
  const container = h("div", { class: "page" });
  root.append(container);
  let metrics: MetricsPayload | null = null;
  let drift: DriftReport | null = null;
  let notice = "";

  const act = (label: string, action: UiAction, call: () => Promise<unknown>) => {
    const model = store.models.find((m) => m.model_id === modelId);
    const enabled = model ? actionEnabled(model.state, action) : false;
    return h(
      "button",
      {
        class: `button action-${action}`,
        disabled: !enabled,
        onclick: () => {
          notice = "";
          call()
            .then(() => draw())
            .catch((err) => {
              notice = errorLine(err);
              draw();
            });
        },
      },
      label,
    );
  };

  const draw = () => {
    clear(container);
    const model = store.models.find((m) => m.model_id === modelId);
    if (!model) {
      container.append(h("h2", {}, modelId), h("p", { class: "muted" }, "Model not found."));
      return;
    }
    container.append(
      h("h2", {}, `${model.model_id} `, badge(model.state)),
      h(
        "p",
        { class: "muted" },
        `${model.template.name}@${model.template.version} · created ${fmtTime(model.created_at)}` +
          (model.serving_version !== null ? ` · serving v${model.serving_version}` : ""),
      ),
    );

    const actions = h(
      "div",
      { class: "actions" },
      act("Train", "train", () => store.api.train(modelId)),
      act("Approve", "approve", () => store.api.approve(modelId)),
      act("Reject", "reject", () => store.api.reject(modelId)),
      act("Retrain", "retrain", () => store.api.train(modelId)),
      act("Rollback", "rollback", () => {
        const target = prompt("Roll back to version:");
        if (target === null) return Promise.resolve();
        return store.api.rollback(modelId, Number(target));
      }),
      act("Archive", "archive", () => store.api.archive(modelId)),
      act("Delete", "delete", () => store.api.deleteModel(modelId)),
    );
    container.append(actions);
    if (notice) container.append(h("p", { class: "error", id: "action-error" }, notice));

    const serving = model.versions.find((v) => v.version === model.serving_version);
    const shown = serving ?? model.versions[model.versions.length - 1];
    if (shown) {
      container.append(h("h3", {}, `Metrics (v${shown.version})`));
      const table = h("table", { class: "grid" });
      for (const [name, value] of Object.entries(shown.metrics)
        .filter(([name]) => !name.startsWith("confusion_"))
        .sort()) {
        table.append(h("tr", {}, h("td", {}, name), h("td", {}, fmtMetric(value))));
      }
      if (metrics?.rolling.accuracy != null) {
        table.append(
          h(
            "tr",
            {},
            h("td", {}, `rolling accuracy (${metrics.rolling.labeled} labeled)`),
            h("td", {}, fmtMetric(metrics.rolling.accuracy)),
          ),
        );
      }
      container.append(table);
    }

    container.append(h("h3", {}, "Versions"));
    const versions = h("table", { class: "grid" });
    versions.append(
      h(
        "tr",
        {},
        h("th", {}, "v"),
        h("th", {}, "run"),
        h("th", {}, "reason"),
        h("th", {}, "created"),
        h("th", {}, "flags"),
      ),
    );
    for (const v of model.versions) {
      const flags = [
        v.approved ? "approved" : "",
        v.rejected ? "rejected" : "",
        v.archived ? "archived" : "",
        v.version === model.serving_version ? "serving" : "",
      ]
        .filter(Boolean)
        .join(", ");
      versions.append(
        h(
          "tr",
          {},
          h("td", {}, `v${v.version}`),
          h("td", {}, v.run_id),
          h("td", {}, v.reason),
          h("td", {}, fmtTime(v.created_at)),
          h("td", {}, flags),
        ),
      );
    }
    container.append(versions);

    container.append(h("h3", {}, "Drift"));
    if (drift && drift.status === "ok") {
      const values = Object.values(drift.per_feature);
      if (drift.prediction_psi !== null) values.push(drift.prediction_psi);
      container.append(
        h(
          "p",
          {},
          sparkline(values, drift.threshold),
          ` max PSI ${drift.max_psi.toFixed(4)} / threshold ${drift.threshold} — `,
          drift.drifted ? h("strong", { class: "error" }, "drifted") : "stable",
        ),
      );
    } else if (drift) {
      container.append(h("p", { class: "muted" }, `drift check: ${drift.status}`));
    } else {
      container.append(h("p", { class: "muted" }, "no drift report yet"));
    }
  };

  draw();
  void store.api
    .metrics(modelId)
    .then((m) => {
      metrics = m;
      draw();
    })
    .catch(() => undefined);
  void store.api
    .drift(modelId)
    .then((d) => {
      drift = d;
      draw();
    })
    .catch(() => undefined);

  const unsubscribe = store.onChange(draw);
  return () => {
    unsubscribe();
    container.remove();
  };
}
