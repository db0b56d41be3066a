/**
 * DOM wiring: one UiSession + one CanvasViewer + one WebSocket.
 * The relay address comes from the `?server=` query parameter and defaults
 * to ws://<host>:9473/ws.
 */

import {
  composeRotation,
  canonicalQuat,
  defaultPolicy,
  Policy,
  Quat,
  quatFromAxisAngle,
} from "./protocol.js";
import { UiSession } from "./session.js";
import { CanvasViewer } from "./viewer.js";
import { parseXyz } from "./xyz.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function serverUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("server");
  if (fromQuery) return fromQuery;
  return `ws://${window.location.hostname || "127.0.0.1"}:9473/ws`;
}

const POLICY_IDS: (keyof Policy)[] = [
  "send_rotations", "send_states", "send_commands",
  "apply_rotations", "apply_states", "apply_commands",
];

function main(): void {
  const canvas = el<HTMLCanvasElement>("viewer");
  const ws = new WebSocket(serverUrl());
  const session = new UiSession((text) => {
    if (ws.readyState === WebSocket.OPEN) ws.send(text);
  });
  const viewer = new CanvasViewer(canvas, (q) => session.drag(q));

  ws.onopen = () => session.hello();
  ws.onmessage = (event) => session.onFrame(String(event.data));
  ws.onclose = () => session.markClosed(false);
  ws.onerror = () => session.markClosed(true);

  // camera frames held back by the throttle flush on a short timer
  window.setInterval(() => session.tick(), 25);

  wireStatus(session);
  wireConnectPanel(session);
  wirePolicyToggles(session);
  wireViewerInput(session, viewer, canvas);
  wireCommandBox(session);
  wireChat(session);
  wireFiles(session, viewer);

  session.onChange((kind) => {
    if (kind === "camera" || kind === "welcome") {
      viewer.setCamera(session.model.orientation, session.model.zoom, session.model.center);
      el<HTMLSpanElement>("zoom-label").textContent = `${Math.round(session.model.zoom)}%`;
    }
    if (kind === "command") {
      const log = session.model.commandLog;
      if (log.length > 0) viewer.runScript(log[log.length - 1]);
    }
  });
  viewer.render();
}

function wireStatus(session: UiSession): void {
  const idLabel = el<HTMLSpanElement>("my-id");
  const statusLabel = el<HTMLSpanElement>("status");
  const render = () => {
    statusLabel.textContent = session.status;
    statusLabel.dataset.state = session.status;
    idLabel.textContent = session.myId ?? "...";
  };
  session.onChange((kind) => {
    if (kind === "welcome" || kind === "status") render();
  });
  el<HTMLButtonElement>("copy-id").onclick = () => {
    if (session.myId) void navigator.clipboard.writeText(session.myId);
  };
  render();
}

function wireConnectPanel(session: UiSession): void {
  const input = el<HTMLInputElement>("connect-id");
  const feedback = el<HTMLSpanElement>("connect-feedback");
  const list = el<HTMLUListElement>("link-list");
  el<HTMLButtonElement>("connect-btn").onclick = () => {
    const problem = session.connectTo(input.value);
    feedback.textContent = problem ?? "connecting...";
    feedback.dataset.kind = problem ? "invalid" : "pending";
  };
  session.onChange((kind) => {
    if (kind === "links") {
      feedback.textContent = "";
      list.replaceChildren(
        ...session.links.map((peer) => {
          const item = document.createElement("li");
          item.textContent = `${peer} (online)`;
          return item;
        })
      );
    }
    if (kind === "connect_failed") {
      feedback.textContent =
        session.lastError?.code === "peer_not_found"
          ? "peer not found: check the id and try again"
          : session.lastError?.message ?? "connect failed";
      feedback.dataset.kind = "error";
    }
  });
}

function wirePolicyToggles(session: UiSession): void {
  const boxes = POLICY_IDS.map((name) => el<HTMLInputElement>(`toggle-${name}`));
  const read = (): Policy => {
    const policy = defaultPolicy();
    POLICY_IDS.forEach((name, i) => {
      policy[name] = boxes[i].checked;
    });
    return policy;
  };
  boxes.forEach((box) => {
    box.checked = true;
    box.onchange = () => session.setPolicy(read());
  });
}

function wireViewerInput(session: UiSession, viewer: CanvasViewer, canvas: HTMLCanvasElement): void {
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    lastX = ev.clientX;
    lastY = ev.clientY;
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    const dx = ev.clientX - lastX;
    const dy = ev.clientY - lastY;
    lastX = ev.clientX;
    lastY = ev.clientY;
    const yaw = quatFromAxisAngle([0, 1, 0], dx * 0.01);
    const pitch = quatFromAxisAngle([1, 0, 0], dy * 0.01);
    const turn = composeRotation(yaw, pitch);
    session.drag(canonicalQuat(composeRotation(session.model.orientation, turn) as Quat));
  });
  const stop = () => {
    dragging = false;
  };
  canvas.addEventListener("pointerup", stop);
  canvas.addEventListener("pointercancel", stop);
  canvas.addEventListener(
    "wheel",
    (ev) => {
      ev.preventDefault();
      const next = Math.min(1000, Math.max(5, session.model.zoom * (ev.deltaY < 0 ? 1.1 : 0.9)));
      session.zoomTo(Math.round(next * 100) / 100);
    },
    { passive: false }
  );
}

function wireCommandBox(session: UiSession): void {
  const input = el<HTMLInputElement>("command-input");
  const feedback = el<HTMLSpanElement>("command-feedback");
  el<HTMLButtonElement>("command-run").onclick = () => {
    const problem = session.command(input.value);
    feedback.textContent = problem ?? "";
    if (!problem) input.value = "";
  };
}

function wireChat(session: UiSession): void {
  const input = el<HTMLInputElement>("chat-input");
  const pane = el<HTMLUListElement>("chat-pane");
  const send = () => {
    if (!input.value.trim()) return;
    session.sendChat(input.value);
    input.value = "";
  };
  el<HTMLButtonElement>("chat-send").onclick = send;
  input.onkeydown = (ev) => {
    if (ev.key === "Enter") send();
  };
  session.onChange((kind) => {
    if (kind !== "chat") return;
    pane.replaceChildren(
      ...session.chat.map((entry) => {
        const item = document.createElement("li");
        item.textContent = `${entry.own ? "me" : entry.from.slice(0, 6)}: ${entry.text}`;
        item.className = entry.own ? "own" : "theirs";
        return item;
      })
    );
    pane.scrollTop = pane.scrollHeight;
  });
}

function wireFiles(session: UiSession, viewer: CanvasViewer): void {
  // local load: viewer only, nothing is transmitted
  el<HTMLInputElement>("load-structure").onchange = async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    viewer.loadStructure(parseXyz(await file.text(), file.name));
  };
  // explicit share: manifest + chunks with progress on the other side
  el<HTMLInputElement>("send-file").onchange = async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    await session.sendFile(file.name, new Uint8Array(await file.arrayBuffer()));
  };

  const list = el<HTMLUListElement>("file-list");
  session.onChange((kind) => {
    if (kind !== "file") return;
    const items: HTMLLIElement[] = [];
    for (const [fileId, entry] of session.incoming) {
      const item = document.createElement("li");
      const pct = entry.manifest.chunk_count === 0
        ? 100
        : Math.round((100 * entry.received) / entry.manifest.chunk_count);
      item.textContent = `${entry.manifest.name} from ${entry.from.slice(0, 6)} - ${pct}% `;
      if (entry.state === "awaiting_accept") {
        const accept = document.createElement("button");
        accept.textContent = "accept";
        accept.onclick = async () => {
          const data = await session.acceptFile(fileId);
          if (data && entry.manifest.name.toLowerCase().endsWith(".xyz")) {
            viewer.loadStructure(parseXyz(new TextDecoder().decode(data), entry.manifest.name));
          }
        };
        const decline = document.createElement("button");
        decline.textContent = "decline";
        decline.onclick = () => session.declineFile(fileId);
        item.append(accept, decline);
      } else {
        item.append(` (${entry.state}${entry.error ? `: ${entry.error}` : ""})`);
      }
      items.push(item);
    }
    for (const [, out] of session.outgoing) {
      const item = document.createElement("li");
      item.textContent = `${out.manifest.name} (sent${out.acked ? ", delivered" : ""}${
        out.error ? `, failed: ${out.error}` : ""})`;
      items.push(item);
    }
    list.replaceChildren(...items);
  });
}

main();
