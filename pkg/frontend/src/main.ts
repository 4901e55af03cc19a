import { ApiClient } from "./api.js";
import { App } from "./app.js";

// same-origin by default; ?api=http://host:port targets a separate service
const params = new URLSearchParams(window.location.search);
const api = new ApiClient(params.get("api") ?? "");

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

void new App(root, api).init();
