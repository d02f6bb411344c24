// Live event feed: newest first, filled from the SSE subscription.

import { clear, fmtTime, h } from "../render";
import type { AppStore } from "../store";

export function renderEventsPage(root: HTMLElement, store: AppStore): () => void {
  const container = h("div", { class: "page" });
  root.append(container);

  const draw = () => {
    clear(container);
    container.append(h("h2", {}, "Events"));
    const table = h("table", { class: "grid", id: "events-table" });
    table.append(
      h("tr", {}, h("th", {}, "seq"), h("th", {}, "at"), h("th", {}, "kind"),
        h("th", {}, "model"), h("th", {}, "payload")),
    );
    const recent = [...store.recentEvents].reverse().slice(0, 200);
    for (const event of recent) {
      const payload = JSON.stringify(event.payload);
      table.append(
        h("tr", { class: "event-row" },
          h("td", {}, String(event.seq)),
          h("td", {}, fmtTime(event.at)),
          h("td", {}, event.kind),
          h("td", {}, event.model_id ?? "-"),
          h("td", { class: "payload" }, payload.length > 120 ? payload.slice(0, 117) + "..." : payload)),
      );
    }
    container.append(table);
    if (!recent.length) container.append(h("p", { class: "muted" }, "No events received yet."));
  };

  draw();
  const unsubscribe = store.onChange(draw);
  return () => {
    unsubscribe();
    container.remove();
  };
}
