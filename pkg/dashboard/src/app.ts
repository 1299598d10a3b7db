/** DOM wiring: connect form, pose plot, health panel, command cards. */

import { BrowserTransport } from "./browser.js";
import { GatewayClient, GatewayError } from "./client.js";
import { UiSessionModel } from "./model.js";
import { drawTrail } from "./plot.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const model = new UiSessionModel();
let client: GatewayClient | null = null;
let redrawQueued = false;

function scheduleRender(): void {
  if (redrawQueued) return;
  redrawQueued = true;
  requestAnimationFrame(() => {
    redrawQueued = false;
    render();
  });
}

function render(): void {
  const badge = $("connection");
  badge.textContent = model.connection === "offline"
    ? `offline ${model.connectionDetail}`.trim()
    : `${model.connection} connected`;
  badge.className = `badge ${model.connection === "offline" ? "bad" : "good"}`;

  drawTrail($("plot") as HTMLCanvasElement, model.poseTrail);
  const pose = model.latestPose;
  $("pose-readout").textContent = pose
    ? `x=${pose.position.x.toFixed(2)}  y=${pose.position.y.toFixed(2)}  z=${pose.position.z.toFixed(2)}`
    : "no telemetry yet";

  renderHealth();
  renderCards();
}

function renderHealth(): void {
  const panel = $("health");
  const snapshot = model.health;
  if (!snapshot) {
    panel.innerHTML = "<p class='dim'>waiting for the first snapshot…</p>";
    return;
  }
  const adapters = snapshot.adapters.map((a) =>
    `<li><span class="dot ${a.ready ? "good" : "bad"}"></span>${esc(a.name)} — ${esc(a.detail)}</li>`,
  ).join("");
  const commands = Object.entries(snapshot.commands)
    .map(([k, v]) => `<tr><td>${esc(k)}</td><td>${v}</td></tr>`).join("");
  const pressure = snapshot.queue_backpressure;
  const log = snapshot.recent_log.slice(-5).reverse().map((entry) =>
    `<li class="${entry.level}">${esc(entry.message)}</li>`).join("");
  panel.innerHTML = `
    <p>uptime ${snapshot.uptime_s.toFixed(0)} s · sessions ${snapshot.sessions_active}
       · drops ${pressure.drops_total}</p>
    <ul class="adapters">${adapters}</ul>
    <table class="counters">${commands}</table>
    ${log ? `<ul class="log">${log}</ul>` : ""}`;
}

function renderCards(): void {
  $("cards").innerHTML = model.cards.map((card) => {
    const pct = card.progress !== null ? Math.round(card.progress * 100) : null;
    return `
    <div class="card ${card.state}">
      <div class="card-head"><strong>${esc(card.label)}</strong>
        <span class="badge ${badgeClass(card.state)}">${card.state}</span></div>
      ${pct !== null ? `<div class="bar"><div class="fill" style="width:${pct}%"></div></div>` : ""}
      ${card.message ? `<p class="msg">${esc(card.message)}</p>` : ""}
    </div>`;
  }).join("");
}

function badgeClass(state: string): string {
  if (state === "completed") return "good";
  if (state === "failed" || state === "rejected") return "bad";
  return "busy";
}

function esc(text: string): string {
  const div = document.createElement("div");
  div.textContent = text;
  return div.innerHTML;
}

function showError(message: string): void {
  const banner = $("error-banner");
  banner.textContent = message;
  banner.hidden = false;
  setTimeout(() => { banner.hidden = true; }, 6000);
}

async function guard(action: () => Promise<unknown>): Promise<void> {
  try {
    await action();
  } catch (err) {
    showError(err instanceof GatewayError ? `${err.detail.code}: ${err.detail.message}` : String(err));
    scheduleRender();
  }
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  ($("endpoint") as HTMLInputElement).value =
    params.get("endpoint") ?? window.location.origin;
  ($("token") as HTMLInputElement).value = params.get("token") ?? "";

  $("connect").onclick = () => void guard(async () => {
    client?.close();
    client = new GatewayClient(model, new BrowserTransport(), scheduleRender);
    await client.connect(
      ($("endpoint") as HTMLInputElement).value,
      ($("token") as HTMLInputElement).value || null,
    );
  });

  $("send-move").onclick = () => void guard(async () => {
    if (!client) throw new Error("connect first");
    await client.sendMove({
      x: Number(($("target-x") as HTMLInputElement).value),
      y: Number(($("target-y") as HTMLInputElement).value),
      z: Number(($("target-z") as HTMLInputElement).value),
    });
  });

  $("set-param").onclick = () => void guard(async () => {
    if (!client) throw new Error("connect first");
    await client.setParam(Number(($("speed") as HTMLInputElement).value));
  });

  $("reset").onclick = () => void guard(async () => {
    if (!client) throw new Error("connect first");
    await client.reset();
  });

  scheduleRender();
}

window.addEventListener("load", main);
