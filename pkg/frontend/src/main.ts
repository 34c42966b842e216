import { Client } from "./api.js";
import { mountApp } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "http://127.0.0.1:8099";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const app = mountApp(root, new Client(apiBase));
void app.start();
